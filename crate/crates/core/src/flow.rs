//! Dense optical flow over the body region.
//!
//! Coarse-to-fine Lucas-Kanade: a Gaussian pyramid of the grey-level region,
//! and at each level a few Gauss-Newton refinements of a per-pixel
//! displacement, each solving the windowed 2x2 normal equations. All pixels
//! update at once from separable window sums, and the field is lightly
//! smoothed after every step so the coupled updates stay stable.

use crate::frame::RawFrame;
use crate::geom::BBox;
use crate::motion::MotionError;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Context added around the body box before solving, clamped to the frame.
    pub padding: u32,
    pub levels: usize,
    pub iterations: usize,
    pub window_radius: usize,
    /// Smallest structure-tensor eigenvalue accepted as trackable texture.
    pub min_eigen: f32,
    /// Radius of the flow smoothing applied after each refinement, 0 for none.
    pub smoothing: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { padding: 8, levels: 3, iterations: 5, window_radius: 3, min_eigen: 1.0, smoothing: 1 }
    }
}

/// Per-pixel displacement `(dx, dy)` over a box, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    bbox: BBox,
    dx: Vec<f32>,
    dy: Vec<f32>,
}

impl FlowField {
    pub fn zeros(bbox: BBox) -> Self {
        let n = bbox.area() as usize;
        Self { bbox, dx: vec![0.0; n], dy: vec![0.0; n] }
    }

    pub fn from_parts(bbox: BBox, dx: Vec<f32>, dy: Vec<f32>) -> Self {
        assert_eq!(dx.len(), bbox.area() as usize);
        assert_eq!(dy.len(), bbox.area() as usize);
        Self { bbox, dx, dy }
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }

    pub fn get(&self, x: u32, y: u32) -> (f32, f32) {
        let i = ((y - self.bbox.y) * self.bbox.w + (x - self.bbox.x)) as usize;
        (self.dx[i], self.dy[i])
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f32> + '_ {
        self.dx.iter().zip(&self.dy).map(|(u, v)| (u * u + v * v).sqrt())
    }

    pub fn is_zero(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|&v| v == 0.0)
    }
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn zeros(w: usize, h: usize) -> Self {
        Self { w, h, data: vec![0.0; w * h] }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.w - 1) as f32);
        let y = y.clamp(0.0, (self.h - 1) as f32);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        let (x1, y1) = ((x0 + 1).min(self.w - 1), (y0 + 1).min(self.h - 1));
        let (r0, r1) = (&self.data[y0 * self.w..], &self.data[y1 * self.w..]);
        let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
        let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// 5-tap binomial blur then 2x decimation.
    fn downsample(&self) -> Plane {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut horiz = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                horiz.data[y * self.w + x] =
                    (0..5).map(|k| K[k] * self.at(x as isize + k as isize - 2, y as isize)).sum();
            }
        }
        let (w2, h2) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut out = Plane::zeros(w2, h2);
        for y in 0..h2 {
            for x in 0..w2 {
                out.data[y * w2 + x] =
                    (0..5).map(|k| K[k] * horiz.at(2 * x as isize, 2 * y as isize + k as isize - 2)).sum();
            }
        }
        out
    }

    /// Separable binomial-weighted window sum of radius `r`, truncated at
    /// the borders. Binomial weights have a non-negative frequency response,
    /// which keeps the coupled per-pixel refinement from amplifying errors.
    fn window_sum(&self, r: usize) -> Plane {
        let weights = binomial(r);
        let (w, h) = (self.w, self.h);
        let taps = |i: usize, n: usize| (r.saturating_sub(i), (2 * r).min(n - 1 + r - i));
        let mut rows = Plane::zeros(w, h);
        for y in 0..h {
            let src = &self.data[y * w..(y + 1) * w];
            for x in 0..w {
                let (k0, k1) = taps(x, w);
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate().take(k1 + 1).skip(k0) {
                    acc += wt * src[x + k - r];
                }
                rows.data[y * w + x] = acc;
            }
        }
        let mut out = Plane::zeros(w, h);
        for y in 0..h {
            let (k0, k1) = taps(y, h);
            let dst = &mut out.data[y * w..(y + 1) * w];
            for (k, &wt) in weights.iter().enumerate().take(k1 + 1).skip(k0) {
                let src = &rows.data[(y + k - r) * w..(y + k - r + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
        out
    }
}

impl Plane {
    /// Normalised binomial blur; `den` is the window sum of a plane of ones.
    fn smoothed(&self, r: usize, den: &Plane) -> Plane {
        let num = self.window_sum(r);
        Plane { w: self.w, h: self.h, data: num.data.iter().zip(&den.data).map(|(n, d)| n / d).collect() }
    }
}

/// Row `2r` of Pascal's triangle.
fn binomial(r: usize) -> Vec<f32> {
    let n = 2 * r;
    let mut row = vec![1.0f32];
    for _ in 0..n {
        let mut next = vec![1.0f32; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row
}

fn grey_region(frame: &RawFrame, region: BBox) -> Plane {
    let mut p = Plane::zeros(region.w as usize, region.h as usize);
    for y in 0..region.h {
        for x in 0..region.w {
            let [r, g, b] = frame.pixel(region.x + x, region.y + y);
            p.data[(y * region.w + x) as usize] = 0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32;
        }
    }
    p
}

fn pyramid(base: Plane, levels: usize) -> Vec<Plane> {
    let mut out = vec![base];
    while out.len() < levels {
        let last = out.last().unwrap();
        if last.w < 16 || last.h < 16 {
            break;
        }
        let next = last.downsample();
        out.push(next);
    }
    out
}

fn refine_level(i1: &Plane, i2: &Plane, u: &mut Plane, v: &mut Plane, params: &FlowParams) {
    let (w, h) = (i1.w, i1.h);
    let mut ix = Plane::zeros(w, h);
    let mut iy = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            ix.data[y * w + x] = 0.5 * (i1.at(xi + 1, yi) - i1.at(xi - 1, yi));
            iy.data[y * w + x] = 0.5 * (i1.at(xi, yi + 1) - i1.at(xi, yi - 1));
        }
    }
    let product = |a: &Plane, b: &Plane| Plane {
        w,
        h,
        data: a.data.iter().zip(&b.data).map(|(p, q)| p * q).collect(),
    };
    let r = params.window_radius;
    let mut it = Plane::zeros(w, h);
    let mut valid = Plane::zeros(w, h);
    let den = Plane { w, h, data: vec![1.0; w * h] }.window_sum(params.smoothing);
    let (wmax, hmax) = ((w - 1) as f32, (h - 1) as f32);
    for _ in 0..params.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (sx, sy) = (x as f32 + u.data[i], y as f32 + v.data[i]);
                // Samples that fall outside the region carry no information.
                if sx < 0.0 || sy < 0.0 || sx > wmax || sy > hmax {
                    valid.data[i] = 0.0;
                    it.data[i] = 0.0;
                } else {
                    valid.data[i] = 1.0;
                    it.data[i] = i2.bilinear(sx, sy) - i1.data[i];
                }
            }
        }
        let gx = product(&ix, &valid);
        let gy = product(&iy, &valid);
        let sxx = product(&gx, &ix).window_sum(r);
        let sxy = product(&gx, &iy).window_sum(r);
        let syy = product(&gy, &iy).window_sum(r);
        let sxt = product(&gx, &it).window_sum(r);
        let syt = product(&gy, &it).window_sum(r);
        for i in 0..w * h {
            let (a, b, c) = (sxx.data[i], sxy.data[i], syy.data[i]);
            let det = a * c - b * b;
            let half_trace = 0.5 * (a + c);
            let min_eigen = half_trace - (half_trace * half_trace - det).max(0.0).sqrt();
            if min_eigen < params.min_eigen {
                continue;
            }
            let du = -(c * sxt.data[i] - b * syt.data[i]) / det;
            let dv = -(a * syt.data[i] - b * sxt.data[i]) / det;
            u.data[i] += du.clamp(-1.0, 1.0);
            v.data[i] += dv.clamp(-1.0, 1.0);
        }
        if params.smoothing > 0 {
            *u = u.smoothed(params.smoothing, &den);
            *v = v.smoothed(params.smoothing, &den);
        }
    }
}

fn upsample_flow(coarse: &Plane, w: usize, h: usize) -> Plane {
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let cx = (x as f32 + 0.5) / 2.0 - 0.5;
            let cy = (y as f32 + 0.5) / 2.0 - 0.5;
            out.data[y * w + x] = 2.0 * coarse.bilinear(cx, cy);
        }
    }
    out
}

/// Dense flow over `body` with default parameters.
pub fn dense_flow(prev: &RawFrame, cur: &RawFrame, body: BBox) -> Result<FlowField, MotionError> {
    dense_flow_with(prev, cur, body, &FlowParams::default())
}

pub fn dense_flow_with(
    prev: &RawFrame,
    cur: &RawFrame,
    body: BBox,
    params: &FlowParams,
) -> Result<FlowField, MotionError> {
    if prev.width() != cur.width() || prev.height() != cur.height() {
        return Err(MotionError::DimensionMismatch(prev.width(), prev.height(), cur.width(), cur.height()));
    }
    if body.is_empty() || !body.fits_within(cur.width(), cur.height()) {
        return Err(MotionError::OutsideFrame(body, cur.width(), cur.height()));
    }
    let region = body.padded(params.padding, cur.width(), cur.height());
    let p1 = pyramid(grey_region(prev, region), params.levels.max(1));
    let p2 = pyramid(grey_region(cur, region), params.levels.max(1));

    let coarsest = p1.last().unwrap();
    let mut u = Plane::zeros(coarsest.w, coarsest.h);
    let mut v = Plane::zeros(coarsest.w, coarsest.h);
    for level in (0..p1.len()).rev() {
        let (i1, i2) = (&p1[level], &p2[level]);
        if u.w != i1.w || u.h != i1.h {
            u = upsample_flow(&u, i1.w, i1.h);
            v = upsample_flow(&v, i1.w, i1.h);
        }
        refine_level(i1, i2, &mut u, &mut v, params);
    }

    let n = body.area() as usize;
    let (mut dx, mut dy) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for y in body.y..body.bottom() {
        for x in body.x..body.right() {
            let i = ((y - region.y) * region.w + (x - region.x)) as usize;
            dx.push(u.data[i]);
            dy.push(v.data[i]);
        }
    }
    Ok(FlowField { bbox: body, dx, dy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smooth random texture: a sum of random plane waves.
    fn texture(seed: u64) -> impl Fn(f32, f32) -> f32 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f32, f32, f32, f32)> = (0..8)
            .map(|_| {
                let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
                let freq: f32 = rng.gen_range(0.15..0.45);
                (freq * angle.cos(), freq * angle.sin(), rng.gen_range(0.0..6.3), rng.gen_range(10.0..25.0))
            })
            .collect();
        move |x, y| 128.0 + waves.iter().map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin()).sum::<f32>()
    }

    fn render(tex: &impl Fn(f32, f32) -> f32, w: u32, h: u32, shift: (i32, i32)) -> RawFrame {
        let mut rgb = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                let g = tex((x as i32 - shift.0) as f32, (y as i32 - shift.1) as f32).clamp(0.0, 255.0) as u8;
                rgb.extend_from_slice(&[g, g, g]);
            }
        }
        RawFrame::new(0, w, h, rgb, None).unwrap()
    }

    fn mean_magnitude(f: &FlowField) -> f32 {
        f.magnitudes().sum::<f32>() / f.len() as f32
    }

    #[test]
    fn identical_frames_give_zero_field() {
        let tex = texture(1);
        let (a, b) = (render(&tex, 64, 48, (0, 0)), render(&tex, 64, 48, (0, 0)));
        let f = dense_flow(&a, &b, BBox::new(8, 8, 48, 32)).unwrap();
        assert!(f.is_zero());
        assert_eq!(f.bbox(), BBox::new(8, 8, 48, 32));
    }

    #[test]
    fn recovers_known_translations() {
        let tex = texture(7);
        let body = BBox::new(12, 10, 40, 28);
        let a = render(&tex, 64, 48, (0, 0));
        let f = dense_flow(&a, &render(&tex, 64, 48, (3, 4)), body).unwrap();
        assert!((mean_magnitude(&f) - 5.0).abs() <= 0.5, "{}", mean_magnitude(&f));
        let f = dense_flow(&a, &render(&tex, 64, 48, (1, 0)), body).unwrap();
        assert!((mean_magnitude(&f) - 1.0).abs() <= 0.25, "{}", mean_magnitude(&f));
        let (dx, dy) = f.get(30, 20);
        assert!((dx - 1.0).abs() < 0.3 && dy.abs() < 0.3, "({dx}, {dy})");
    }

    #[test]
    fn deterministic() {
        let tex = texture(3);
        let a = render(&tex, 64, 48, (0, 0));
        let b = render(&tex, 64, 48, (2, -1));
        let body = BBox::new(10, 10, 30, 20);
        assert_eq!(dense_flow(&a, &b, body).unwrap(), dense_flow(&a, &b, body).unwrap());
    }

    #[test]
    fn rejects_box_outside_frame() {
        let tex = texture(3);
        let a = render(&tex, 32, 32, (0, 0));
        assert!(matches!(dense_flow(&a, &a, BBox::new(20, 20, 20, 20)), Err(MotionError::OutsideFrame(..))));
    }
}
