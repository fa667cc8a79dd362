use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ScenarioConfig, Step};
use crate::frame::RawFrame;

pub const BACKGROUND: [u8; 3] = [64, 64, 64];

/// With channel noise up to this amplitude an unchanged pixel moves by at
/// most 90 in summed RGB and a changed palette pixel by more than 90.
pub const MAX_PIXEL_NOISE: u8 = 15;

const NOISE_PLANES: usize = 8;

/// 25 colours from `{0, 127, 255}^3` without black and white. Any two differ
/// by at least 127 in one channel.
pub const PALETTE: [[u8; 3]; 25] = {
    let levels = [0u8, 127, 255];
    let mut out = [[0u8; 3]; 25];
    let mut n = 0;
    let mut i = 0;
    while i < 27 {
        let c = [levels[i / 9], levels[i / 3 % 3], levels[i % 3]];
        let black = c[0] == 0 && c[1] == 0 && c[2] == 0;
        let white = c[0] == 255 && c[1] == 255 && c[2] == 255;
        if !black && !white {
            out[n] = c;
            n += 1;
        }
        i += 1;
    }
    out
};

/// Texture index at an offset from the texture origin. A shift with
/// `|dx|, |dy| <= 4` that is not zero changes the index of every pixel.
pub fn palette_index(dx: i32, dy: i32) -> usize {
    (dx + 5 * dy).rem_euclid(25) as usize
}

/// Draws steps into frames. Pixel noise comes from a small bank of
/// precomputed planes so absent frames cost one copy.
pub struct Renderer {
    width: u32,
    height: u32,
    noise: Vec<Vec<i8>>,
    backgrounds: Vec<Vec<u8>>,
    rng: ChaCha8Rng,
}

impl Renderer {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let amp = cfg.noise.pixel_amplitude.min(MAX_PIXEL_NOISE) as i8;
        let n = (cfg.width * cfg.height * 3) as usize;
        let planes = if amp == 0 { 1 } else { NOISE_PLANES };
        rng.set_stream(2);
        let noise: Vec<Vec<i8>> = (0..planes)
            .map(|_| (0..n).map(|_| if amp == 0 { 0 } else { rng.gen_range(-amp..=amp) }).collect())
            .collect();
        let backgrounds = noise
            .iter()
            .map(|plane| plane.iter().enumerate().map(|(i, &e)| add(BACKGROUND[i % 3], e)).collect())
            .collect();
        Self { width: cfg.width, height: cfg.height, noise, backgrounds, rng }
    }

    pub fn render(&mut self, step: &Step) -> RawFrame {
        let k = if self.noise.len() > 1 { self.rng.gen_range(0..self.noise.len()) } else { 0 };
        let mut rgb = self.backgrounds[k].clone();
        if let Some(occ) = &step.occupancy {
            let noise = &self.noise[k];
            let b = occ.body;
            for y in b.y..b.bottom() {
                for x in b.x..b.right() {
                    let c = PALETTE[occ.index_at(x, y)];
                    let at = ((y * self.width + x) * 3) as usize;
                    for ch in 0..3 {
                        rgb[at + ch] = add(c[ch], noise[at + ch]);
                    }
                }
            }
        }
        RawFrame::new(step.timestamp_ms, self.width, self.height, rgb, None)
            .expect("rendered buffer matches frame size")
    }
}

fn add(v: u8, e: i8) -> u8 {
    (v as i16 + e as i16).clamp(0, 255) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1(a: [u8; 3], b: [u8; 3]) -> u32 {
        (0..3).map(|i| a[i].abs_diff(b[i]) as u32).sum()
    }

    #[test]
    fn palette_entries_are_far_apart() {
        for (i, a) in PALETTE.iter().enumerate() {
            assert!(l1(*a, BACKGROUND) > 90 + 6 * MAX_PIXEL_NOISE as u32);
            for b in &PALETTE[i + 1..] {
                assert!(a.iter().zip(b).any(|(x, y)| x.abs_diff(*y) >= 127));
            }
        }
    }

    #[test]
    fn small_shifts_change_every_index() {
        for dx in -4..=4 {
            for dy in -4..=4 {
                if (dx, dy) == (0, 0) {
                    continue;
                }
                for x in 0..30 {
                    for y in 0..30 {
                        assert_ne!(palette_index(x, y), palette_index(x - dx, y - dy));
                    }
                }
            }
        }
    }
}
