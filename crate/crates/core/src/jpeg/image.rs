use crate::error::{ensure, Result};

/// 8-bit interleaved RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, "image dims must be >= 1, got {width}x{height}");
        ensure!(
            data.len() == width * height * 3,
            "image data length {} != {}x{}x3",
            data.len(),
            width,
            height
        );
        Ok(Self { width, height, data })
    }

    /// Uniform image with every sample equal to `value`.
    pub fn filled(width: usize, height: usize, value: [u8; 3]) -> Result<Self> {
        let data = value.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel class map (one byte per pixel).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(data.len() == width * height, "mask length {} != {width}x{height}", data.len());
        Ok(Self { width, height, data })
    }
}

/// Peak signal-to-noise ratio in dB over all samples. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    ensure!(
        a.same_dims(b),
        "psnr dims differ: {}x{} vs {}x{}",
        a.width,
        a.height,
        b.width,
        b.height
    );
    let sse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.data.len() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}
