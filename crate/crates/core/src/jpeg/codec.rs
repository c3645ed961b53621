use serde::{Deserialize, Serialize};

use super::dct;
use super::image::Image;
use super::jfif::emit_jfif;
use super::tables::{quality_to_tables, QuantTable, QuantTableSet};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Subsampling {
    #[serde(rename = "4:4:4")]
    S444,
    #[default]
    #[serde(rename = "4:2:0")]
    S420,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecConfig {
    pub quality: u8,
    pub subsampling: Subsampling,
    /// Also produce a baseline JFIF bitstream.
    pub entropy_coding: bool,
}

impl CodecConfig {
    /// 4:2:0, coefficient container only.
    pub fn new(quality: u8) -> Result<Self> {
        ensure!((1..=100).contains(&quality), "quality must be in [1, 100], got {quality}");
        Ok(Self { quality, subsampling: Subsampling::S420, entropy_coding: false })
    }

    pub fn with_subsampling(mut self, subsampling: Subsampling) -> Self {
        self.subsampling = subsampling;
        self
    }

    pub fn with_entropy_coding(mut self, on: bool) -> Self {
        self.entropy_coding = on;
        self
    }
}

/// Quantized coefficients of one 8×8 block in natural order.
pub type Block = [i16; 64];

/// Quantized coefficient blocks of one colour component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    /// Component sample width (after subsampling).
    pub width: usize,
    pub height: usize,
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub blocks: Vec<Block>,
}

impl Plane {
    pub fn zeroed(width: usize, height: usize) -> Self {
        let blocks_w = width.div_ceil(8);
        let blocks_h = height.div_ceil(8);
        Self { width, height, blocks_w, blocks_h, blocks: vec![[0; 64]; blocks_w * blocks_h] }
    }

    pub fn block(&self, bx: usize, by: usize) -> &Block {
        &self.blocks[by * self.blocks_w + bx]
    }

    pub fn nonzero_count(&self) -> usize {
        self.blocks.iter().flat_map(|b| b.iter()).filter(|&&c| c != 0).count()
    }
}

/// Output of [`encode`]: quantized Y, Cb, Cr planes plus the settings needed
/// to reconstruct pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedImage {
    pub config: CodecConfig,
    pub width: usize,
    pub height: usize,
    pub tables: QuantTableSet,
    pub planes: Vec<Plane>,
    pub bitstream: Option<Vec<u8>>,
}

impl CompressedImage {
    pub fn nonzero_count(&self) -> usize {
        self.planes.iter().map(Plane::nonzero_count).sum()
    }

    pub fn chroma_dims(width: usize, height: usize, subsampling: Subsampling) -> (usize, usize) {
        match subsampling {
            Subsampling::S444 => (width, height),
            Subsampling::S420 => (width.div_ceil(2), height.div_ceil(2)),
        }
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn rgb_to_ycbcr(img: &Image) -> [Vec<u8>; 3] {
    let n = img.width() * img.height();
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for px in img.data().chunks_exact(3) {
        let (r, g, b) = (f64::from(px[0]), f64::from(px[1]), f64::from(px[2]));
        y.push(clamp_u8(0.299 * r + 0.587 * g + 0.114 * b));
        cb.push(clamp_u8(-0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0));
        cr.push(clamp_u8(0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0));
    }
    [y, cb, cr]
}

/// 2×2 box filter; edge cells average whatever samples exist.
fn subsample_420(src: &[u8], w: usize, h: usize) -> Vec<u8> {
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(cw * ch);
    for cy in 0..ch {
        for cx in 0..cw {
            let mut sum = 0u32;
            let mut n = 0u32;
            for y in (2 * cy)..(2 * cy + 2).min(h) {
                for x in (2 * cx)..(2 * cx + 2).min(w) {
                    sum += u32::from(src[y * w + x]);
                    n += 1;
                }
            }
            out.push(((sum + n / 2) / n) as u8);
        }
    }
    out
}

fn quantize_plane(samples: &[u8], w: usize, h: usize, table: &QuantTable) -> Plane {
    let mut plane = Plane::zeroed(w, h);
    for by in 0..plane.blocks_h {
        for bx in 0..plane.blocks_w {
            let mut blk = [0.0f64; 64];
            for y in 0..8 {
                // Edge replication for partial blocks.
                let sy = (by * 8 + y).min(h - 1);
                for x in 0..8 {
                    let sx = (bx * 8 + x).min(w - 1);
                    blk[y * 8 + x] = f64::from(samples[sy * w + sx]) - 128.0;
                }
            }
            let coef = dct::forward(&blk);
            let out = &mut plane.blocks[by * plane.blocks_w + bx];
            for k in 0..64 {
                let limit = if k == 0 { 2047.0 } else { 1023.0 };
                // Snap to 1e-9 so exact half-way ratios (e.g. 1016/16) survive
                // the float DCT's rounding noise before half-away rounding.
                let ratio = coef[k] / f64::from(table.0[k]);
                let snapped = (ratio * 1e9).round() / 1e9;
                out[k] = snapped.round().clamp(-limit, limit) as i16;
            }
        }
    }
    plane
}

fn reconstruct_plane(plane: &Plane, table: &QuantTable) -> Vec<u8> {
    let (w, h) = (plane.width, plane.height);
    let mut out = vec![0u8; w * h];
    for by in 0..plane.blocks_h {
        for bx in 0..plane.blocks_w {
            let q = plane.block(bx, by);
            let mut coef = [0.0f64; 64];
            for k in 0..64 {
                coef[k] = f64::from(q[k]) * f64::from(table.0[k]);
            }
            let px = dct::inverse(&coef);
            for y in 0..8 {
                let sy = by * 8 + y;
                if sy >= h {
                    break;
                }
                for x in 0..8 {
                    let sx = bx * 8 + x;
                    if sx >= w {
                        break;
                    }
                    out[sy * w + sx] = clamp_u8(px[y * 8 + x] + 128.0);
                }
            }
        }
    }
    out
}

/// Lossy compression of `img` under `cfg`.
pub fn encode(img: &Image, cfg: &CodecConfig) -> Result<CompressedImage> {
    ensure!(
        (1..=100).contains(&cfg.quality),
        "quality must be in [1, 100], got {}",
        cfg.quality
    );
    let (w, h) = (img.width(), img.height());
    let tables = quality_to_tables(cfg.quality)?;
    let [y, cb, cr] = rgb_to_ycbcr(img);
    let (cw, ch) = CompressedImage::chroma_dims(w, h, cfg.subsampling);
    let (cb, cr) = match cfg.subsampling {
        Subsampling::S444 => (cb, cr),
        Subsampling::S420 => (subsample_420(&cb, w, h), subsample_420(&cr, w, h)),
    };
    let planes = vec![
        quantize_plane(&y, w, h, &tables.luma),
        quantize_plane(&cb, cw, ch, &tables.chroma),
        quantize_plane(&cr, cw, ch, &tables.chroma),
    ];
    let mut out = CompressedImage {
        config: *cfg,
        width: w,
        height: h,
        tables,
        planes,
        bitstream: None,
    };
    if cfg.entropy_coding {
        out.bitstream = Some(emit_jfif(&out)?);
    }
    Ok(out)
}

/// Reconstructs pixels from the quantized planes.
pub fn decode(c: &CompressedImage) -> Result<Image> {
    ensure!(c.planes.len() == 3, "expected 3 planes, got {}", c.planes.len());
    let (w, h) = (c.width, c.height);
    let (cw, ch) = CompressedImage::chroma_dims(w, h, c.config.subsampling);
    let y = &c.planes[0];
    ensure!(y.width == w && y.height == h, "luma plane dims do not match image");
    for p in &c.planes[1..] {
        ensure!(p.width == cw && p.height == ch, "chroma plane dims do not match subsampling");
    }
    for p in &c.planes {
        ensure!(
            p.blocks.len() == p.blocks_w * p.blocks_h
                && p.blocks_w == p.width.div_ceil(8)
                && p.blocks_h == p.height.div_ceil(8),
            "plane block count inconsistent with dims"
        );
    }
    let ys = reconstruct_plane(&c.planes[0], &c.tables.luma);
    let cbs = reconstruct_plane(&c.planes[1], &c.tables.chroma);
    let crs = reconstruct_plane(&c.planes[2], &c.tables.chroma);
    let (sx, sy) = match c.config.subsampling {
        Subsampling::S444 => (1, 1),
        Subsampling::S420 => (2, 2),
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for py in 0..h {
        for px in 0..w {
            let yv = f64::from(ys[py * w + px]);
            let ci = (py / sy) * cw + px / sx;
            let cbv = f64::from(cbs[ci]) - 128.0;
            let crv = f64::from(crs[ci]) - 128.0;
            data.push(clamp_u8(yv + 1.402 * crv));
            data.push(clamp_u8(yv - 0.344_136 * cbv - 0.714_136 * crv));
            data.push(clamp_u8(yv + 1.772 * cbv));
        }
    }
    Image::new(w, h, data)
}

/// `decode(encode(img, q))` with the default 4:2:0 container path.
pub fn roundtrip(img: &Image, quality: u8) -> Result<Image> {
    decode(&encode(img, &CodecConfig::new(quality)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::psnr;

    fn gradient_image(w: usize, h: usize) -> Image {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let r = (x * 255 / w.max(1)) as u8;
                let g = (y * 255 / h.max(1)) as u8;
                let b = (((x / 4 + y / 4) % 2) * 200) as u8;
                data.extend_from_slice(&[r, g, b]);
            }
        }
        Image::new(w, h, data).unwrap()
    }

    #[test]
    fn uniform_mid_gray_has_zero_coefficients() {
        let img = Image::filled(20, 13, [128; 3]).unwrap();
        for q in [1, 10, 50, 90, 100] {
            for s in [Subsampling::S444, Subsampling::S420] {
                let c = encode(&img, &CodecConfig::new(q).unwrap().with_subsampling(s)).unwrap();
                assert_eq!(c.nonzero_count(), 0);
                assert_eq!(decode(&c).unwrap(), img);
            }
        }
    }

    #[test]
    fn constant_white_block_dc() {
        let img = Image::filled(8, 8, [255; 3]).unwrap();
        let cfg = CodecConfig::new(50).unwrap().with_subsampling(Subsampling::S444);
        let c = encode(&img, &cfg).unwrap();
        let blk = c.planes[0].block(0, 0);
        assert_eq!(blk[0], 64);
        assert!(blk[1..].iter().all(|&v| v == 0));
    }

    #[test]
    fn dims_preserved_with_padding() {
        let img = gradient_image(50, 33);
        let c = encode(&img, &CodecConfig::new(50).unwrap()).unwrap();
        assert_eq!(c.planes[0].blocks.len(), 7 * 5);
        assert_eq!(c.planes[1].width, 25);
        assert_eq!(c.planes[1].height, 17);
        assert_eq!(c.planes[1].blocks.len(), 4 * 3);
        let out = decode(&c).unwrap();
        assert_eq!((out.width(), out.height()), (50, 33));
    }

    #[test]
    fn higher_quality_keeps_more_detail() {
        let img = gradient_image(48, 48);
        let lo = encode(&img, &CodecConfig::new(10).unwrap()).unwrap();
        let hi = encode(&img, &CodecConfig::new(90).unwrap()).unwrap();
        assert!(lo.nonzero_count() <= hi.nonzero_count());
        let p_lo = psnr(&img, &decode(&lo).unwrap()).unwrap();
        let p_hi = psnr(&img, &decode(&hi).unwrap()).unwrap();
        assert!(p_hi > p_lo, "{p_hi} <= {p_lo}");
    }

    #[test]
    fn encode_is_deterministic() {
        let img = gradient_image(17, 9);
        let cfg = CodecConfig::new(37).unwrap().with_entropy_coding(true);
        assert_eq!(encode(&img, &cfg).unwrap(), encode(&img, &cfg).unwrap());
    }

    #[test]
    fn bad_quality_rejected() {
        assert!(CodecConfig::new(0).is_err());
        let img = gradient_image(8, 8);
        let cfg = CodecConfig { quality: 120, subsampling: Subsampling::S444, entropy_coding: false };
        assert!(encode(&img, &cfg).is_err());
    }
}
