//! Raster file I/O: binary PPM (P6) for RGB images, binary PGM (P5) for
//! class masks, PNG behind the `png` feature.

use std::fs;
use std::path::Path;

use super::image::{Image, Mask};
use crate::error::{Error, Result};

fn parse_header(data: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    if data.len() < 2 || &data[..2] != magic {
        return Err(Error::decode(format!("expected {} header", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match data.get(pos) {
                Some(b'#') => {
                    while data.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::decode("truncated header")),
            }
        }
        let start = pos;
        while data.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&data[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::decode("bad header field"))?;
    }
    // exactly one whitespace byte before the raster
    if !data.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::decode("missing whitespace after header"));
    }
    if fields[2] != 255 {
        return Err(Error::decode("only maxval 255 is supported"));
    }
    Ok((fields[0], fields[1], pos + 1))
}

pub fn decode_ppm(data: &[u8]) -> Result<Image> {
    let (w, h, off) = parse_header(data, b"P6")?;
    let need = w * h * 3;
    if data.len() < off + need {
        return Err(Error::decode("truncated PPM raster"));
    }
    Image::new(w, h, data[off..off + need].to_vec()).map_err(|e| Error::decode(e.to_string()))
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode_pgm(data: &[u8]) -> Result<Mask> {
    let (w, h, off) = parse_header(data, b"P5")?;
    if data.len() < off + w * h {
        return Err(Error::decode("truncated PGM raster"));
    }
    Mask::new(w, h, data[off..off + w * h].to_vec())
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.data);
    out
}

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<Image> {
    let file = fs::File::open(path)?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::decode(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::decode(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let data = match info.color_type {
        png::ColorType::Rgb => px.to_vec(),
        png::ColorType::Rgba => px.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => px.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => return Err(Error::decode("indexed PNG not expanded")),
    };
    Image::new(w, h, data)
}

#[cfg(feature = "png")]
fn write_png(path: &Path, img: &Image) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), img.width() as u32, img.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer
        .write_image_data(img.data())
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a PPM, or a PNG when the `png` feature is on.
pub fn read_image(path: &Path) -> Result<Image> {
    if is_png(path) {
        #[cfg(feature = "png")]
        return read_png(path);
        #[cfg(not(feature = "png"))]
        return Err(Error::invalid("PNG support not compiled in"));
    }
    decode_ppm(&fs::read(path)?)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    if is_png(path) {
        #[cfg(feature = "png")]
        return write_png(path, img);
        #[cfg(not(feature = "png"))]
        return Err(Error::invalid("PNG support not compiled in"));
    }
    fs::write(path, encode_ppm(img))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    fs::write(path, encode_pgm(mask))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_with_comment() {
        let mut data = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_ppm(&data).unwrap();
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
        assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn truncated_ppm() {
        assert!(decode_ppm(b"P6\n2 2\n255\n\x01\x02").is_err());
        assert!(decode_ppm(b"P3\n1 1\n255\n").is_err());
    }

    #[test]
    fn pgm_roundtrip() {
        let m = Mask::new(3, 2, vec![0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&m)).unwrap(), m);
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = Image::new(3, 2, (0..18).collect()).unwrap();
        write_image(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
    }
}
