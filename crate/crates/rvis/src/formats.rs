//! Binary PGM/PPM writers for masks and rasters.

use std::io::Write;

use crate::raster::{Grid, Mask};
use crate::Result;

/// Binary PGM (P5, maxval 255). Mask convention: 0 = occluded, 255 = visible.
pub fn write_mask_pgm<W: Write>(mut w: W, mask: &Mask) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", mask.res(), mask.res())?;
    let mut row = vec![0u8; mask.res()];
    for r in 0..mask.res() {
        for (c, px) in row.iter_mut().enumerate() {
            *px = if mask.get(r, c) { 255 } else { 0 };
        }
        w.write_all(&row)?;
    }
    Ok(())
}

/// Binary PGM of arbitrary 8-bit data.
pub fn write_gray_pgm<W: Write>(mut w: W, grid: &Grid<u8>) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", grid.width(), grid.height())?;
    w.write_all(grid.data())?;
    Ok(())
}

/// Binary PPM (P6) of RGB data.
pub fn write_rgb_ppm<W: Write>(mut w: W, width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<()> {
    assert_eq!(rgb.len(), width * height);
    write!(w, "P6\n{width} {height}\n255\n")?;
    let mut flat = Vec::with_capacity(rgb.len() * 3);
    for px in rgb {
        flat.extend_from_slice(px);
    }
    w.write_all(&flat)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_payload() {
        let mut m = Mask::filled(2, false);
        m.set(0, 1, true);
        let mut buf = Vec::new();
        write_mask_pgm(&mut buf, &m).unwrap();
        assert_eq!(&buf[..9], b"P5\n2 2\n25");
        assert_eq!(&buf[buf.len() - 4..], &[0, 255, 0, 0]);
    }

    #[test]
    fn ppm_header() {
        let mut buf = Vec::new();
        write_rgb_ppm(&mut buf, 1, 1, &[[1, 2, 3]]).unwrap();
        assert_eq!(&buf, b"P6\n1 1\n255\n\x01\x02\x03");
    }
}
