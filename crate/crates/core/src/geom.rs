use serde::{Deserialize, Serialize};

/// Axis-aligned pixel rectangle, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Grow by `pad` pixels on every side, clamped to a `width` x `height` frame.
    pub fn padded(&self, pad: u32, width: u32, height: u32) -> BBox {
        let x0 = self.x.saturating_sub(pad);
        let y0 = self.y.saturating_sub(pad);
        let x1 = (self.right() + pad).min(width);
        let y1 = (self.bottom() + pad).min(height);
        BBox::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }
}

/// Incrementally grown bounding box over integer pixel coordinates.
#[derive(Debug, Default, Clone, Copy)]
pub struct BoundsAccumulator {
    bounds: Option<(u32, u32, u32, u32)>,
}

impl BoundsAccumulator {
    pub fn add(&mut self, x: u32, y: u32) {
        self.bounds = Some(match self.bounds {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }

    pub fn finish(self) -> Option<BBox> {
        self.bounds
            .map(|(x0, y0, x1, y1)| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersection_and_padding() {
        let a = BBox::new(0, 0, 10, 10);
        let b = BBox::new(5, 5, 10, 10);
        assert_eq!(a.intersect(&b), Some(BBox::new(5, 5, 5, 5)));
        assert_eq!(a.intersect(&BBox::new(10, 0, 2, 2)), None);
        assert_eq!(b.padded(8, 12, 20), BBox::new(0, 0, 12, 20));
    }

    #[test]
    fn accumulator_bounds() {
        let mut acc = BoundsAccumulator::default();
        assert_eq!(acc.finish(), None);
        acc.add(3, 4);
        acc.add(1, 9);
        assert_eq!(acc.finish(), Some(BBox::new(1, 4, 3, 6)));
    }
}
