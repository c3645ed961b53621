use crate::error::{ensure, Result};

/// Luminance base table from ITU-T T.81 Annex K.1, natural (row-major) order.
pub const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Chrominance base table from ITU-T T.81 Annex K.2, natural order.
pub const ANNEX_K_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// `ZIGZAG[k]` is the natural-order index of the k-th coefficient in
/// zig-zag scan order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// One 8×8 quantization table in natural order, entries in `[1, 255]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuantTable(pub [u16; 64]);

impl QuantTable {
    pub fn new(entries: [u16; 64]) -> Result<Self> {
        ensure!(
            entries.iter().all(|&e| (1..=255).contains(&e)),
            "quantization entries must lie in [1, 255]"
        );
        Ok(Self(entries))
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.0[row * 8 + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuantTableSet {
    pub luma: QuantTable,
    pub chroma: QuantTable,
}

fn scale_table(base: &[u16; 64], scale: u32) -> QuantTable {
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        let v = (u32::from(b) * scale + 50) / 100;
        *o = v.clamp(1, 255) as u16;
    }
    QuantTable(out)
}

/// IJG libjpeg quality scaling (`jpeg_quality_scaling` + baseline clamp).
pub fn quality_to_tables(quality: u8) -> Result<QuantTableSet> {
    ensure!((1..=100).contains(&quality), "quality must be in [1, 100], got {quality}");
    let q = u32::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    Ok(QuantTableSet {
        luma: scale_table(&ANNEX_K_LUMA, scale),
        chroma: scale_table(&ANNEX_K_CHROMA, scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert_eq!(quality_to_tables(50).unwrap().luma.0, ANNEX_K_LUMA);
        assert_eq!(quality_to_tables(90).unwrap().luma.get(0, 0), 3);
        assert_eq!(quality_to_tables(10).unwrap().luma.get(0, 0), 80);
        assert_eq!(quality_to_tables(100).unwrap().chroma.0, [1; 64]);
        assert_eq!(quality_to_tables(1).unwrap().luma.0, [255; 64]);
    }

    #[test]
    fn out_of_range() {
        assert!(quality_to_tables(0).is_err());
        assert!(quality_to_tables(101).is_err());
    }

    #[test]
    fn zigzag_is_permutation() {
        let mut seen = [false; 64];
        for &z in &ZIGZAG {
            assert!(!seen[z]);
            seen[z] = true;
        }
    }

    #[test]
    fn quant_table_rejects_zero() {
        assert!(QuantTable::new([0; 64]).is_err());
    }
}
