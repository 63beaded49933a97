//! Image file formats.
//!
//! - `IMG1`: exact binary tensors — magic bytes, three little-endian u64
//!   dims `(C, H, W)`, then little-endian f64 data in row-major order.
//! - PPM (P6) / PGM (P5): 8-bit interchange formats; PPM quantizes each
//!   channel to 1/255.

use std::io::Read;
use std::path::Path;

use crate::error::DataError;
use crate::tensor::Tensor;

pub const IMG1_MAGIC: &[u8; 4] = b"IMG1";

/// Image encoding chosen at dataset-write time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Img1,
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Img1 => "img1",
            ImageFormat::Ppm => "ppm",
        }
    }

    pub fn parse(s: &str) -> Option<ImageFormat> {
        match s {
            "img1" => Some(ImageFormat::Img1),
            "ppm" => Some(ImageFormat::Ppm),
            _ => None,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn bad_image(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Image {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn write_img1(path: &Path, image: &Tensor) -> Result<(), DataError> {
    let shape = image.shape();
    assert_eq!(shape.len(), 3, "IMG1 stores [C, H, W] tensors");
    let mut bytes = Vec::with_capacity(4 + 24 + 8 * image.numel());
    bytes.extend_from_slice(IMG1_MAGIC);
    for &dim in shape {
        bytes.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for v in image.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_img1(path: &Path) -> Result<Tensor, DataError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    if bytes.len() < 28 || &bytes[..4] != IMG1_MAGIC {
        return Err(bad_image(path, "missing IMG1 magic"));
    }
    let mut dims = [0usize; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[4 + 8 * i..12 + 8 * i]);
        *d = u64::from_le_bytes(buf) as usize;
    }
    let numel = dims[0] * dims[1] * dims[2];
    if bytes.len() != 28 + 8 * numel {
        return Err(bad_image(
            path,
            format!("expected {} data bytes, found {}", 8 * numel, bytes.len() - 28),
        ));
    }
    let mut data = Vec::with_capacity(numel);
    for i in 0..numel {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[28 + 8 * i..36 + 8 * i]);
        data.push(f64::from_le_bytes(buf));
    }
    Tensor::new(dims.to_vec(), data).map_err(|e| bad_image(path, e.to_string()))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a `[3, H, W]` tensor as binary PPM, one byte per channel.
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<(), DataError> {
    let shape = image.shape();
    assert_eq!(shape.len(), 3, "PPM stores [3, H, W] tensors");
    assert_eq!(shape[0], 3, "PPM needs exactly 3 channels");
    let (h, w) = (shape[1], shape[2]);
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    let data = image.data();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                bytes.push(quantize(data[(c * h + y) * w + x]));
            }
        }
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Tensor, DataError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let (w, h, offset) = parse_netpbm_header(&bytes, b"P6")
        .map_err(|m| bad_image(path, m))?;
    let expect = 3 * w * h;
    if bytes.len() - offset != expect {
        return Err(bad_image(
            path,
            format!("expected {expect} pixel bytes, found {}", bytes.len() - offset),
        ));
    }
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let byte = bytes[offset + (y * w + x) * 3 + c];
                data[(c * h + y) * w + x] = byte as f64 / 255.0;
            }
        }
    }
    Tensor::new(vec![3, h, w], data).map_err(|e| bad_image(path, e.to_string()))
}

/// Write a grayscale map as binary PGM (P5), 8-bit.
pub fn write_pgm(path: &Path, values: &[f64], height: usize, width: usize) -> Result<(), DataError> {
    assert_eq!(values.len(), height * width);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| quantize(v)));
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_pgm(path: &Path) -> Result<(Vec<u8>, usize, usize), DataError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let (w, h, offset) = parse_netpbm_header(&bytes, b"P5")
        .map_err(|m| bad_image(path, m))?;
    if bytes.len() - offset != w * h {
        return Err(bad_image(path, "truncated PGM payload"));
    }
    Ok((bytes[offset..].to_vec(), h, w))
}

/// Parse `<magic>\n<w> <h>\n255\n`, returning `(w, h, payload_offset)`.
fn parse_netpbm_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize), String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!(
            "missing {} magic",
            std::str::from_utf8(magic).unwrap_or("?")
        ));
    }
    let mut fields = Vec::new();
    let mut pos = 2;
    while fields.len() < 3 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            break;
        }
        let field = std::str::from_utf8(&bytes[start..pos]).map_err(|_| "bad header")?;
        fields.push(
            field
                .parse::<usize>()
                .map_err(|_| format!("bad header field `{field}`"))?,
        );
    }
    if fields.len() != 3 || fields[2] != 255 {
        return Err("expected `<w> <h> 255` header".to_string());
    }
    // single whitespace byte separates header from payload
    Ok((fields[0], fields[1], pos + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_image(seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        Tensor::new(vec![3, 5, 4], (0..60).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn img1_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.img1");
        let img = random_image(1);
        write_img1(&path, &img).unwrap();
        let back = read_img1(&path).unwrap();
        assert!(img.bitwise_eq(&back));
    }

    #[test]
    fn ppm_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let img = random_image(2);
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        let max_err = img.max_abs_diff(&back);
        assert!(max_err <= 0.5 / 255.0 + 1e-12, "PPM error {max_err}");
    }

    #[test]
    fn img1_truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.img1");
        write_img1(&path, &random_image(3)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, bytes).unwrap();
        assert!(read_img1(&path).is_err());
    }

    #[test]
    fn pgm_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_pgm(&path, &[0.0, 0.5, 1.0, 0.25], 2, 2).unwrap();
        let (payload, h, w) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (2, 2));
        assert_eq!(payload, vec![0, 128, 255, 64]);
    }
}
