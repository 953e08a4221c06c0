//! Integral visibility and the coded visibility map.
//!
//! The forward integral averages registered top-down masks over a selected
//! set of poses; the reciprocal integral is its transpose view: visibility
//! of selected ground pixels across all poses. The coded map replaces
//! averaging with orthogonal binary codes (bit k belongs to ground point k)
//! so every ground point's visibility can be decoded from a single raster
//! over the aperture plane.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::raster::{BitVec, Grid, GridGeom, Mask};
use crate::scene::GroundPoints;
use crate::{Error, Result};

/// Word widths supported for coded-map batch planes.
pub const SUPPORTED_WORD_BITS: [usize; 5] = [8, 16, 24, 32, 64];

/// Binary selection vector over poses (forward) or ground pixels
/// (reciprocal).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionVector {
    bits: BitVec,
}

impl SelectionVector {
    pub fn zeros(len: usize) -> Self {
        SelectionVector {
            bits: BitVec::new(len, false),
        }
    }

    pub fn ones(len: usize) -> Self {
        SelectionVector {
            bits: BitVec::new(len, true),
        }
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut v = Self::zeros(len);
        for &i in indices {
            if i >= len {
                return Err(Error::OutOfBounds(format!(
                    "selection index {i} out of {len}"
                )));
            }
            v.bits.set(i, true);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits.get(i)
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits.set(i, value);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }
}

/// The visibility matrix V: column n is the vectorized registered mask of
/// pose n. Held as the mask list itself, so nothing is materialized densely
/// and full-scale instances stay cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMatrix {
    res: usize,
    masks: Vec<Mask>,
}

/// Wrap registered masks as a visibility matrix. Errors on mixed
/// resolutions or an empty list.
pub fn assemble_matrix(masks: Vec<Mask>) -> Result<VisibilityMatrix> {
    let res = match masks.first() {
        Some(m) => m.res(),
        None => return Err(Error::InvalidParameter("no masks to assemble".into())),
    };
    if let Some(bad) = masks.iter().find(|m| m.res() != res) {
        return Err(Error::SizeMismatch(format!(
            "mask resolution {} != {}",
            bad.res(),
            res
        )));
    }
    Ok(VisibilityMatrix { res, masks })
}

impl VisibilityMatrix {
    /// Rows: ground pixels, M = res^2.
    pub fn nrows(&self) -> usize {
        self.res * self.res
    }

    /// Columns: poses.
    pub fn ncols(&self) -> usize {
        self.masks.len()
    }

    pub fn res(&self) -> usize {
        self.res
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> bool {
        self.masks[col].get_linear(row)
    }

    pub fn column(&self, col: usize) -> &Mask {
        &self.masks[col]
    }
}

/// Real-valued integral visibility raster with its normalization count.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Number of selected samples (Z).
    pub z: usize,
}

impl IntegralMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Per-pixel mean of the selected masks; Z = number of selected masks.
pub fn integrate_forward(masks: &[Mask], p: &SelectionVector) -> Result<IntegralMap> {
    if p.len() != masks.len() {
        return Err(Error::SizeMismatch(format!(
            "selection length {} != {} masks",
            p.len(),
            masks.len()
        )));
    }
    let z = p.count_ones();
    if z == 0 {
        return Err(Error::InvalidParameter(
            "selection vector has no set bits".into(),
        ));
    }
    let res = masks[0].res();
    if masks.iter().any(|m| m.res() != res) {
        return Err(Error::SizeMismatch("mixed mask resolutions".into()));
    }
    let mut sums = vec![0u32; res * res];
    for n in p.iter_ones() {
        let mask = &masks[n];
        for (i, s) in sums.iter_mut().enumerate() {
            *s += mask.get_linear(i) as u32;
        }
    }
    Ok(IntegralMap {
        width: res,
        height: res,
        values: sums.into_iter().map(|s| s as f64 / z as f64).collect(),
        z,
    })
}

/// Reciprocal integral: entry n is the mean visibility of the selected
/// ground pixels from pose n, reshaped to the grid_n x grid_n pose grid.
/// With a single selected pixel this is exactly row m of V.
pub fn integrate_reciprocal_lowres(
    v: &VisibilityMatrix,
    p_up: &SelectionVector,
    grid_n: usize,
) -> Result<IntegralMap> {
    if p_up.len() != v.nrows() {
        return Err(Error::SizeMismatch(format!(
            "selection length {} != {} ground pixels",
            p_up.len(),
            v.nrows()
        )));
    }
    if grid_n * grid_n != v.ncols() {
        return Err(Error::SizeMismatch(format!(
            "pose grid {grid_n}^2 != {} columns",
            v.ncols()
        )));
    }
    let z = p_up.count_ones();
    if z == 0 {
        return Err(Error::InvalidParameter(
            "selection vector has no set bits".into(),
        ));
    }
    let selected: Vec<usize> = p_up.iter_ones().collect();
    let values = (0..v.ncols())
        .map(|n| {
            let hits = selected.iter().filter(|&&m| v.entry(m, n)).count();
            hits as f64 / z as f64
        })
        .collect();
    Ok(IntegralMap {
        width: grid_n,
        height: grid_n,
        values,
        z,
    })
}

/// K-bit visibility code of one aperture-plane cell, bit k = ground point k.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Code {
    k: usize,
    words: Vec<u64>,
}

impl Code {
    pub fn zero(k: usize) -> Self {
        Code {
            k,
            words: vec![0; k.div_ceil(64)],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.k);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Hex rendering of the code as an unsigned integer (bit k has weight
    /// 2^k), zero-padded to ceil(K/4) digits, most significant first.
    pub fn to_hex(&self) -> String {
        let digits = self.k.div_ceil(4);
        let mut s = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let bit = d * 4;
            let nibble = (self.words[bit / 64] >> (bit % 64)) & 0xf;
            s.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        s
    }

    /// Parse the `to_hex` rendering.
    pub fn from_hex(k: usize, s: &str) -> Result<Self> {
        if s.len() != k.div_ceil(4) {
            return Err(Error::Parse(format!(
                "code hex length {} != {}",
                s.len(),
                k.div_ceil(4)
            )));
        }
        let mut code = Code::zero(k);
        for (pos, ch) in s.chars().rev().enumerate() {
            let nibble = ch
                .to_digit(16)
                .ok_or_else(|| Error::Parse(format!("bad hex digit '{ch}'")))?
                as u64;
            let bit = pos * 4;
            code.words[bit / 64] |= nibble << (bit % 64);
        }
        for i in k..code.words.len() * 64 {
            if code.words[i / 64] >> (i % 64) & 1 == 1 {
                return Err(Error::Parse("code has bits above K".into()));
            }
        }
        Ok(code)
    }
}

/// Georeference of a raster over the aperture plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneGeoref {
    pub grid: GridGeom,
    pub altitude_m: f64,
}

/// Raster of K-bit visibility words over the aperture plane, stored as
/// B = ceil(K/L) batch planes of L-bit words.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedVisibilityMap {
    res: usize,
    k: usize,
    word_bits: usize,
    planes: Vec<Vec<u64>>,
    georef: PlaneGeoref,
}

/// Integrate K bottom-up masks into a coded map. Cell words are plain bit
/// sums (2^k per visible ground point) and are never normalized.
pub fn build_coded_map(
    bottom_up_masks: &[Mask],
    word_bits: usize,
    georef: PlaneGeoref,
) -> Result<CodedVisibilityMap> {
    let k = bottom_up_masks.len();
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one mask".into()));
    }
    if !SUPPORTED_WORD_BITS.contains(&word_bits) {
        return Err(Error::InvalidParameter(format!(
            "word width {word_bits} not in {SUPPORTED_WORD_BITS:?}"
        )));
    }
    let res = bottom_up_masks[0].res();
    if bottom_up_masks.iter().any(|m| m.res() != res) {
        return Err(Error::SizeMismatch("mixed mask resolutions".into()));
    }
    if georef.grid.res != res {
        return Err(Error::SizeMismatch(format!(
            "georeference is {} cells, masks are {res}",
            georef.grid.res
        )));
    }
    let batches = k.div_ceil(word_bits);
    let mut planes = vec![vec![0u64; res * res]; batches];
    for (bit, mask) in bottom_up_masks.iter().enumerate() {
        let plane = &mut planes[bit / word_bits];
        let shift = bit % word_bits;
        for (cell, word) in plane.iter_mut().enumerate() {
            *word |= (mask.get_linear(cell) as u64) << shift;
        }
    }
    Ok(CodedVisibilityMap {
        res,
        k,
        word_bits,
        planes,
        georef,
    })
}

impl CodedVisibilityMap {
    pub fn res(&self) -> usize {
        self.res
    }

    pub fn cell_count(&self) -> usize {
        self.res * self.res
    }

    /// Number of ground points / code bits.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Bits per batch plane (L).
    pub fn word_bits(&self) -> usize {
        self.word_bits
    }

    /// Batch plane count B = ceil(K/L).
    pub fn batches(&self) -> usize {
        self.planes.len()
    }

    pub fn georef(&self) -> &PlaneGeoref {
        &self.georef
    }

    pub fn plane(&self, b: usize) -> &[u64] {
        &self.planes[b]
    }

    #[inline]
    pub fn bit_at(&self, cell: usize, k: usize) -> bool {
        self.planes[k / self.word_bits][cell] >> (k % self.word_bits) & 1 == 1
    }

    /// Full code word of one cell, concatenated across batch planes.
    pub fn cell_code(&self, cell: usize) -> Code {
        let mut code = Code::zero(self.k);
        for (b, plane) in self.planes.iter().enumerate() {
            let word = plane[cell];
            let base = b * self.word_bits;
            let wi = base / 64;
            let shift = base % 64;
            code.words[wi] |= word << shift;
            if shift > 0 && shift + self.word_bits > 64 {
                code.words[wi + 1] |= word >> (64 - shift);
            }
        }
        code
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.res + col
    }

    /// Extract the visibility mask of ground point k (exact roundtrip with
    /// [`build_coded_map`]).
    pub fn decode(&self, k: usize) -> Result<Mask> {
        if k >= self.k {
            return Err(Error::OutOfBounds(format!(
                "ground point {k} out of {}",
                self.k
            )));
        }
        let plane = &self.planes[k / self.word_bits];
        let shift = k % self.word_bits;
        let mut mask = Mask::filled(self.res, false);
        for (cell, word) in plane.iter().enumerate() {
            if word >> shift & 1 == 1 {
                mask.set_linear(cell, true);
            }
        }
        Ok(mask)
    }

    /// Per-cell popcount over all K bits: how many ground points are
    /// visible from each aperture position.
    pub fn magnitude(&self) -> Grid<u32> {
        let mut grid = Grid::filled(self.res, self.res, 0u32);
        for plane in &self.planes {
            for (cell, word) in plane.iter().enumerate() {
                grid.data_mut()[cell] += word.count_ones();
            }
        }
        grid
    }

    /// Magnitude scaled to 8-bit gray (255 = all K points visible).
    pub fn magnitude_gray(&self) -> Grid<u8> {
        let mag = self.magnitude();
        let mut out = Grid::filled(self.res, self.res, 0u8);
        for (dst, &m) in out.data_mut().iter_mut().zip(mag.data()) {
            *dst = ((m as f64 / self.k as f64) * 255.0).round() as u8;
        }
        out
    }

    /// False-color rendering: a fixed hash of each cell's full code word,
    /// zero code mapped to black.
    pub fn code_colors(&self) -> Vec<[u8; 3]> {
        (0..self.cell_count())
            .map(|cell| {
                let code = self.cell_code(cell);
                if code.count_ones() == 0 {
                    return [0, 0, 0];
                }
                let mut h = 0xcbf2_9ce4_8422_2325u64;
                for w in code.words() {
                    h = crate::rng::splitmix64(h ^ w);
                }
                [(h >> 16) as u8, (h >> 32) as u8, (h >> 48) as u8]
            })
            .collect()
    }
}

/// Bind each ground point to the nearest pixel of the registered ground
/// grid; the returned linear indices are the rows of V the points select.
pub fn bind_ground_points(points: &GroundPoints, ground: &GridGeom) -> Result<Vec<usize>> {
    points
        .points()
        .iter()
        .map(|&(x, y)| {
            if ground.world_to_cell(x, y).is_none() {
                return Err(Error::OutOfBounds(format!(
                    "ground point ({x}, {y}) outside the registered grid"
                )));
            }
            let (r, c) = ground.nearest_cell(x, y);
            Ok(r * ground.res + c)
        })
        .collect()
}

/// Downsample a bottom-up mask to the pose grid: box-average the raster
/// cells around each pose position, then threshold at 0.5.
pub fn downsample_to_pose_grid(
    mask: &Mask,
    plane: &GridGeom,
    extent_origin: (f64, f64),
    extent_size: (f64, f64),
    grid_n: usize,
) -> Mask {
    let mut out = Mask::filled(grid_n, false);
    let (half_x, half_y) = if grid_n > 1 {
        (
            extent_size.0 / (grid_n as f64 - 1.0) / 2.0,
            extent_size.1 / (grid_n as f64 - 1.0) / 2.0,
        )
    } else {
        (extent_size.0 / 2.0, extent_size.1 / 2.0)
    };
    for row in 0..grid_n {
        for col in 0..grid_n {
            let (px, py) = if grid_n == 1 {
                (
                    extent_origin.0 + extent_size.0 / 2.0,
                    extent_origin.1 + extent_size.1 / 2.0,
                )
            } else {
                (
                    extent_origin.0 + col as f64 / (grid_n as f64 - 1.0) * extent_size.0,
                    extent_origin.1 + extent_size.1
                        - row as f64 / (grid_n as f64 - 1.0) * extent_size.1,
                )
            };
            // plane cells whose centers fall inside the box
            let left = plane.center_x - plane.width_m() / 2.0;
            let top = plane.center_y + plane.height_m() / 2.0;
            let c0 = ((px - half_x - left) / plane.pitch_x - 0.5).ceil().max(0.0) as usize;
            let c1 = ((px + half_x - left) / plane.pitch_x - 0.5).floor().min(plane.res as f64 - 1.0);
            let r0 = ((top - (py + half_y)) / plane.pitch_y - 0.5).ceil().max(0.0) as usize;
            let r1 = ((top - (py - half_y)) / plane.pitch_y - 0.5).floor().min(plane.res as f64 - 1.0);
            let mut ones = 0usize;
            let mut count = 0usize;
            if c1 >= 0.0 && r1 >= 0.0 {
                for r in r0..=r1 as usize {
                    for c in c0..=c1 as usize {
                        ones += mask.get(r, c) as usize;
                        count += 1;
                    }
                }
            }
            let value = if count == 0 {
                let (nr, nc) = plane.nearest_cell(px, py);
                mask.get(nr, nc)
            } else {
                ones * 2 >= count
            };
            out.set(row, col, value);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// RVCODE1 file format
// ---------------------------------------------------------------------------

/// Write a coded map: ASCII header `RVCODE1 width height K L B` followed by
/// B planes of width*height little-endian L-bit words, row-major.
pub fn write_rvcode<W: Write>(writer: W, map: &CodedVisibilityMap) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(
        w,
        "RVCODE1 {} {} {} {} {}",
        map.res,
        map.res,
        map.k,
        map.word_bits,
        map.batches()
    )?;
    let bytes = map.word_bits / 8;
    for plane in &map.planes {
        for &word in plane {
            w.write_all(&word.to_le_bytes()[..bytes])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a coded map written by [`write_rvcode`]. The file format carries no
/// georeference; the caller supplies it.
pub fn read_rvcode<R: Read>(reader: R, georef: PlaneGeoref) -> Result<CodedVisibilityMap> {
    let mut r = BufReader::new(reader);
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)
            .map_err(|_| Error::Parse("missing RVCODE1 header".into()))?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let header = String::from_utf8(header).map_err(|_| Error::Parse("non-UTF8 header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "RVCODE1" {
        return Err(Error::Parse(format!("bad header '{header}'")));
    }
    let num = |i: usize| -> Result<usize> {
        fields[i]
            .parse()
            .map_err(|_| Error::Parse(format!("bad header field '{}'", fields[i])))
    };
    let (width, height, k, word_bits, batches) = (num(1)?, num(2)?, num(3)?, num(4)?, num(5)?);
    if width != height {
        return Err(Error::Parse("only square maps are supported".into()));
    }
    if !SUPPORTED_WORD_BITS.contains(&word_bits) {
        return Err(Error::Parse(format!("unsupported word width {word_bits}")));
    }
    if batches != k.div_ceil(word_bits) {
        return Err(Error::Parse(format!(
            "batch count {batches} != ceil({k}/{word_bits})"
        )));
    }
    if georef.grid.res != width {
        return Err(Error::SizeMismatch(format!(
            "georeference is {} cells, file is {width}",
            georef.grid.res
        )));
    }
    let bytes = word_bits / 8;
    let mut planes = Vec::with_capacity(batches);
    let mut buf = [0u8; 8];
    for _ in 0..batches {
        let mut plane = Vec::with_capacity(width * height);
        for _ in 0..width * height {
            buf.fill(0);
            r.read_exact(&mut buf[..bytes])
                .map_err(|_| Error::Parse("truncated RVCODE1 payload".into()))?;
            plane.push(u64::from_le_bytes(buf));
        }
        planes.push(plane);
    }
    Ok(CodedVisibilityMap {
        res: width,
        k,
        word_bits,
        planes,
        georef,
    })
}

pub fn save_rvcode(path: &Path, map: &CodedVisibilityMap) -> Result<()> {
    write_rvcode(std::fs::File::create(path)?, map)
}

pub fn load_rvcode(path: &Path, georef: PlaneGeoref) -> Result<CodedVisibilityMap> {
    read_rvcode(std::fs::File::open(path)?, georef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn georef(res: usize) -> PlaneGeoref {
        PlaneGeoref {
            grid: GridGeom::new(res, (0.0, 0.0), (32.0 / res as f64, 32.0 / res as f64)),
            altitude_m: 35.0,
        }
    }

    fn random_masks(res: usize, k: usize, seed: u64) -> Vec<Mask> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| {
                let mut m = Mask::filled(res, false);
                for i in 0..m.len() {
                    if rng.gen::<bool>() {
                        m.set_linear(i, true);
                    }
                }
                m
            })
            .collect()
    }

    #[test]
    fn assemble_rejects_mixed_resolutions() {
        let masks = vec![Mask::filled(2, true), Mask::filled(3, true)];
        assert!(matches!(assemble_matrix(masks), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn assemble_single_mask_shape() {
        let v = assemble_matrix(vec![Mask::filled(2, true)]).unwrap();
        assert_eq!(v.nrows(), 4);
        assert_eq!(v.ncols(), 1);
        assert!(v.entry(3, 0));
    }

    #[test]
    fn forward_single_selection_is_identity() {
        let masks = random_masks(8, 3, 1);
        let p = SelectionVector::from_indices(3, &[1]).unwrap();
        let i = integrate_forward(&masks, &p).unwrap();
        assert_eq!(i.z, 1);
        for idx in 0..64 {
            assert_eq!(i.values[idx], masks[1].get_linear(idx) as u8 as f64);
        }
    }

    #[test]
    fn forward_disjoint_masks_average_to_half() {
        let mut a = Mask::filled(2, false);
        let mut b = Mask::filled(2, false);
        a.set(0, 0, true);
        b.set(1, 1, true);
        let p = SelectionVector::ones(2);
        let i = integrate_forward(&[a, b], &p).unwrap();
        assert_eq!(i.get(0, 0), 0.5);
        assert_eq!(i.get(1, 1), 0.5);
        assert_eq!(i.get(0, 1), 0.0);
        assert_eq!(i.z, 2);
    }

    #[test]
    fn forward_identical_masks_reproduce_the_mask() {
        let masks = vec![random_masks(4, 1, 2)[0].clone(); 5];
        let p = SelectionVector::ones(5);
        let i = integrate_forward(&masks, &p).unwrap();
        for idx in 0..16 {
            assert_eq!(i.values[idx], masks[0].get_linear(idx) as u8 as f64);
        }
    }

    #[test]
    fn forward_rejects_empty_selection() {
        let masks = random_masks(4, 2, 3);
        let p = SelectionVector::zeros(2);
        assert!(integrate_forward(&masks, &p).is_err());
    }

    #[test]
    fn reciprocal_single_pixel_is_a_row_of_v() {
        let masks = random_masks(8, 9, 4);
        let v = assemble_matrix(masks).unwrap();
        let m = 27; // arbitrary ground pixel
        let p = SelectionVector::from_indices(v.nrows(), &[m]).unwrap();
        let i = integrate_reciprocal_lowres(&v, &p, 3).unwrap();
        for n in 0..v.ncols() {
            assert_eq!(i.values[n], v.entry(m, n) as u8 as f64);
        }
    }

    #[test]
    fn reciprocal_all_ones_is_visible_fraction() {
        let masks = random_masks(4, 4, 5);
        let counts: Vec<f64> = masks
            .iter()
            .map(|m| m.count_ones() as f64 / m.len() as f64)
            .collect();
        let v = assemble_matrix(masks).unwrap();
        let p = SelectionVector::ones(v.nrows());
        let i = integrate_reciprocal_lowres(&v, &p, 2).unwrap();
        for (n, &c) in counts.iter().enumerate() {
            assert!((i.values[n] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn reciprocal_all_ones_matrix_yields_ones() {
        let masks = vec![Mask::filled(4, true); 4];
        let v = assemble_matrix(masks).unwrap();
        let p = SelectionVector::from_indices(16, &[3, 7]).unwrap();
        let i = integrate_reciprocal_lowres(&v, &p, 2).unwrap();
        assert!(i.values.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn coded_map_single_all_ones_mask() {
        let map = build_coded_map(&[Mask::filled(4, true)], 8, georef(4)).unwrap();
        assert_eq!(map.batches(), 1);
        assert!(map.plane(0).iter().all(|&w| w == 1));
    }

    #[test]
    fn coded_word_arithmetic() {
        // K=4, masks 1 and 3 visible at one cell -> word 2^1 + 2^3 = 10
        let mut masks = vec![Mask::filled(2, false); 4];
        masks[1].set(0, 0, true);
        masks[3].set(0, 0, true);
        let map = build_coded_map(&masks, 8, georef(2)).unwrap();
        assert_eq!(map.plane(0)[0], 10);
        assert_eq!(map.magnitude().get(0, 0), 2);
    }

    #[test]
    fn batch_layout_240_over_24() {
        let masks = random_masks(4, 240, 6);
        let map = build_coded_map(&masks, 24, georef(4)).unwrap();
        assert_eq!(map.batches(), 10);
        for k in 0..240 {
            assert_eq!(&map.decode(k).unwrap(), &masks[k]);
        }
    }

    #[test]
    fn decode_roundtrip_and_bounds() {
        let masks = random_masks(8, 3, 7);
        let map = build_coded_map(&masks, 8, georef(8)).unwrap();
        assert_eq!(&map.decode(1).unwrap(), &masks[1]);
        assert!(map.decode(3).is_err());
    }

    #[test]
    fn magnitude_equals_sum_of_decodes() {
        let masks = random_masks(8, 24, 8);
        let map = build_coded_map(&masks, 24, georef(8)).unwrap();
        let mag = map.magnitude();
        for cell in 0..map.cell_count() {
            let by_decode: u32 = (0..24)
                .map(|k| map.decode(k).unwrap().get_linear(cell) as u32)
                .sum();
            assert_eq!(mag.data()[cell], by_decode);
        }
    }

    #[test]
    fn cell_code_concatenates_batches() {
        let masks = random_masks(4, 40, 9);
        let map = build_coded_map(&masks, 16, georef(4)).unwrap();
        assert_eq!(map.batches(), 3);
        for cell in 0..map.cell_count() {
            let code = map.cell_code(cell);
            for (k, mask) in masks.iter().enumerate() {
                assert_eq!(code.bit(k), mask.get_linear(cell), "cell {cell} bit {k}");
            }
        }
    }

    #[test]
    fn code_hex_roundtrip() {
        let mut code = Code::zero(21);
        code.set_bit(0);
        code.set_bit(4);
        code.set_bit(20);
        let hex = code.to_hex();
        assert_eq!(hex.len(), 6);
        assert_eq!(hex, "100011");
        assert_eq!(Code::from_hex(21, &hex).unwrap(), code);
    }

    #[test]
    fn rvcode_roundtrip() {
        let masks = random_masks(8, 21, 10);
        let map = build_coded_map(&masks, 24, georef(8)).unwrap();
        let mut buf = Vec::new();
        write_rvcode(&mut buf, &map).unwrap();
        assert!(buf.starts_with(b"RVCODE1 8 8 21 24 1\n"));
        let back = read_rvcode(&buf[..], georef(8)).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn rvcode_word_payload_is_3_bytes_for_l24() {
        let masks = random_masks(2, 1, 11);
        let map = build_coded_map(&masks, 24, georef(2)).unwrap();
        let mut buf = Vec::new();
        write_rvcode(&mut buf, &map).unwrap();
        let header_len = b"RVCODE1 2 2 1 24 1\n".len();
        assert_eq!(buf.len(), header_len + 4 * 3);
    }

    #[test]
    fn downsample_thresholds_box_average() {
        // plane raster 8x8 over a 32 m extent; pose grid 2x2 at the corners
        let plane = GridGeom::new(8, (0.0, 0.0), (4.0, 4.0));
        let mut mask = Mask::filled(8, false);
        // fill the top-left quadrant
        for r in 0..4 {
            for c in 0..4 {
                mask.set(r, c, true);
            }
        }
        let down = downsample_to_pose_grid(&mask, &plane, (-16.0, -16.0), (32.0, 32.0), 2);
        assert!(down.get(0, 0));
        assert!(!down.get(0, 1));
        assert!(!down.get(1, 0));
        assert!(!down.get(1, 1));
    }
}
