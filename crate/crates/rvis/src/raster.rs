//! Raster primitives shared by the renderers and the coded-map builder:
//! a packed bit vector, a square binary mask, a generic scalar grid, and
//! the geometry mapping raster cells to world coordinates.

use crate::{Error, Result};

/// Packed vector of bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn new(len: usize, value: bool) -> Self {
        let fill = if value { u64::MAX } else { 0 };
        let mut v = BitVec {
            len,
            words: vec![fill; len.div_ceil(64)],
        };
        v.clear_tail();
        v
    }

    fn clear_tail(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// Square binary raster. Row-major; row 0 is the top of the image
/// (maximum world y under the standard [`GridGeom`] orientation).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    res: usize,
    bits: BitVec,
}

impl Mask {
    pub fn filled(res: usize, value: bool) -> Self {
        Mask {
            res,
            bits: BitVec::new(res * res, value),
        }
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn len(&self) -> usize {
        self.res * self.res
    }

    pub fn is_empty(&self) -> bool {
        self.res == 0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits.get(row * self.res + col)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits.set(row * self.res + col, value);
    }

    /// Access by linear (row-major) index, the vectorized view.
    #[inline]
    pub fn get_linear(&self, i: usize) -> bool {
        self.bits.get(i)
    }

    pub fn set_linear(&mut self, i: usize, value: bool) {
        self.bits.set(i, value);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    /// True if `self` is 1 nowhere that `other` is 0 (pixelwise <=).
    pub fn subset_of(&self, other: &Mask) -> bool {
        self.res == other.res
            && self
                .bits
                .words
                .iter()
                .zip(other.bits.words.iter())
                .all(|(a, b)| a & !b == 0)
    }
}

/// Dense row-major scalar raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "grid data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Maps cells of a raster to world coordinates on a horizontal plane.
///
/// Column 0 sits at minimum x, row 0 at maximum y; cell centers are offset
/// half a pitch from the extent edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeom {
    pub res: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub pitch_x: f64,
    pub pitch_y: f64,
}

impl GridGeom {
    pub fn new(res: usize, center: (f64, f64), pitch: (f64, f64)) -> Self {
        GridGeom {
            res,
            center_x: center.0,
            center_y: center.1,
            pitch_x: pitch.0,
            pitch_y: pitch.1,
        }
    }

    pub fn width_m(&self) -> f64 {
        self.pitch_x * self.res as f64
    }

    pub fn height_m(&self) -> f64 {
        self.pitch_y * self.res as f64
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.center_x + (col as f64 + 0.5 - self.res as f64 / 2.0) * self.pitch_x;
        let y = self.center_y + (self.res as f64 / 2.0 - row as f64 - 0.5) * self.pitch_y;
        (x, y)
    }

    /// Cell containing the world point, or `None` outside the raster.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fc = (x - self.center_x) / self.pitch_x + self.res as f64 / 2.0;
        let fr = (self.center_y - y) / self.pitch_y + self.res as f64 / 2.0;
        if fc < 0.0 || fr < 0.0 {
            return None;
        }
        let (r, c) = (fr as usize, fc as usize);
        if r < self.res && c < self.res {
            Some((r, c))
        } else {
            None
        }
    }

    /// Cell whose center is nearest to the world point, clamped to bounds.
    pub fn nearest_cell(&self, x: f64, y: f64) -> (usize, usize) {
        let fc = (x - self.center_x) / self.pitch_x + self.res as f64 / 2.0 - 0.5;
        let fr = (self.center_y - y) / self.pitch_y + self.res as f64 / 2.0 - 0.5;
        let clamp = |v: f64| (v.round().max(0.0) as usize).min(self.res - 1);
        (clamp(fr), clamp(fc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitvec_set_get_count() {
        let mut v = BitVec::new(130, false);
        v.set(0, true);
        v.set(64, true);
        v.set(129, true);
        assert!(v.get(0) && v.get(64) && v.get(129));
        assert!(!v.get(1));
        assert_eq!(v.count_ones(), 3);
        assert_eq!(v.iter_ones().collect::<Vec<_>>(), vec![0, 64, 129]);
        v.set(64, false);
        assert_eq!(v.count_ones(), 2);
    }

    #[test]
    fn bitvec_filled_true_has_clean_tail() {
        let v = BitVec::new(70, true);
        assert_eq!(v.count_ones(), 70);
    }

    #[test]
    fn mask_linear_matches_2d() {
        let mut m = Mask::filled(4, false);
        m.set(2, 3, true);
        assert!(m.get_linear(2 * 4 + 3));
        assert_eq!(m.count_ones(), 1);
    }

    #[test]
    fn subset_relation() {
        let mut a = Mask::filled(3, false);
        let mut b = Mask::filled(3, false);
        a.set(1, 1, true);
        b.set(1, 1, true);
        b.set(0, 0, true);
        assert!(a.subset_of(&b));
        assert!(!b.subset_of(&a));
    }

    #[test]
    fn grid_geom_roundtrip() {
        let g = GridGeom::new(8, (0.0, 0.0), (0.5, 0.5));
        for row in 0..8 {
            for col in 0..8 {
                let (x, y) = g.cell_center(row, col);
                assert_eq!(g.world_to_cell(x, y), Some((row, col)));
                assert_eq!(g.nearest_cell(x, y), (row, col));
            }
        }
        // row 0 is top: maximum y
        let (_, y_top) = g.cell_center(0, 0);
        let (_, y_bot) = g.cell_center(7, 0);
        assert!(y_top > y_bot);
        assert_eq!(g.world_to_cell(10.0, 0.0), None);
        assert_eq!(g.world_to_cell(-10.0, 0.0), None);
    }
}
