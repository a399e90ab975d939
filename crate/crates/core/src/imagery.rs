//! Dense image/map containers, raster and tensor I/O, resizing and
//! normalization.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// RGB image, row-major `H×W×3`, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "image {width}x{height} needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        check_unit(&data, "image")?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Per-channel planes, used by the convolution in [`crate::toyscorer`].
    pub fn channel(&self, c: usize) -> RealMap {
        let data = self.data.iter().skip(c).step_by(3).copied().collect();
        RealMap {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Corner-aligned bilinear resize of every channel.
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Result<ImageRgb> {
        if new_w == self.width && new_h == self.height {
            return Ok(self.clone());
        }
        let planes = (0..3)
            .map(|c| self.channel(c).resize_bilinear(new_w, new_h))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(new_w * new_h * 3);
        for i in 0..new_w * new_h {
            for p in &planes {
                data.push(p.data[i].clamp(0.0, 1.0));
            }
        }
        Ok(ImageRgb {
            width: new_w,
            height: new_h,
            data,
        })
    }
}

/// Single-channel map with values in `[0, 1]` (saliency maps, metric inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty map {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "map {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        check_unit(&data, "gray map")?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn to_real(&self) -> RealMap {
        RealMap {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }

    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Result<GrayMap> {
        if new_w == self.width && new_h == self.height {
            return Ok(self.clone());
        }
        let r = self.to_real().resize_bilinear(new_w, new_h)?;
        Ok(GrayMap {
            width: r.width,
            height: r.height,
            data: r.data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    /// Fraction of pixels strictly above `level`.
    pub fn area_above(&self, level: f64) -> f64 {
        self.data.iter().filter(|&&v| v > level).count() as f64 / self.data.len() as f64
    }

    /// Binarizes with `value > level`.
    pub fn threshold(&self, level: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v > level).collect(),
        }
    }

    /// Elementwise maximum of two equally sized maps.
    pub fn max_with(&self, other: &GrayMap) -> Result<GrayMap> {
        same_dims((self.width, self.height), (other.width, other.height))?;
        Ok(GrayMap {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.max(*b))
                .collect(),
        })
    }
}

/// Boolean mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "mask {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
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

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_gray(&self) -> GrayMap {
        GrayMap {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    /// Intersection over union; two empty masks count as a perfect match.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        same_dims((self.width, self.height), (other.width, other.height))?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }
}

/// Unbounded real-valued `H×W` map (raw activation maps, score sums).
#[derive(Debug, Clone, PartialEq)]
pub struct RealMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RealMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Shape(format!(
                "real map {width}x{height} with {} values",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear interpolation with corner-aligned sampling: output corners
    /// land exactly on input corners. A length-1 output axis samples the
    /// input's midpoint.
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Result<RealMap> {
        if new_w == 0 || new_h == 0 {
            return Err(Error::InvalidArgument(format!(
                "resize target {new_w}x{new_h}"
            )));
        }
        if new_w == self.width && new_h == self.height {
            return Ok(self.clone());
        }
        let xs = axis_samples(self.width, new_w);
        let ys = axis_samples(self.height, new_h);
        let mut data = Vec::with_capacity(new_w * new_h);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = lerp(self.get(x0, y0), self.get(x1, y0), fx);
                let bottom = lerp(self.get(x0, y1), self.get(x1, y1), fx);
                data.push(lerp(top, bottom, fy));
            }
        }
        Ok(RealMap {
            width: new_w,
            height: new_h,
            data,
        })
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

fn axis_samples(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let pos = if dst == 1 {
                (src - 1) as f64 / 2.0
            } else {
                (i * (src - 1)) as f64 / (dst - 1) as f64
            };
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Dense `K×m×h` tensor, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Convolutional activations `f^k`.
pub type FeatureStack = Tensor3;
/// Gradients of a class score with respect to a [`FeatureStack`].
pub type GradStack = Tensor3;

impl Tensor3 {
    pub fn new(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "tensor shape ({channels},{rows},{cols}) has an empty axis"
            )));
        }
        if data.len() != channels * rows * cols {
            return Err(Error::Shape(format!(
                "tensor ({channels},{rows},{cols}) needs {} values, got {}",
                channels * rows * cols,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self {
            channels,
            rows,
            cols,
            data: vec![0.0; channels * rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.rows, self.cols)
    }

    pub fn plane(&self, k: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.rows * self.cols;
        &mut self.data[k * n..(k + 1) * n]
    }
}

/// Min-max rescale to `[0, 1]`. A constant input maps to all zeros.
pub fn normalize_unit(map: &RealMap) -> Result<GrayMap> {
    if map.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normalize_unit input"));
    }
    let (lo, hi) = map
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let data = if range > 0.0 {
        map.data
            .iter()
            .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; map.data.len()]
    };
    Ok(GrayMap {
        width: map.width,
        height: map.height,
        data,
    })
}

pub(crate) fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

fn check_unit(data: &[f64], what: &'static str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "{what} value {v} outside [0,1]"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Raster I/O

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(Error::format(path, "unrecognized raster format"));
    }
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => Ok(img),
        other => Err(Error::BitDepth {
            path: path.to_path_buf(),
            detail: format!("{other:?}"),
        }),
    }
}

/// Loads an 8-bit PNG or binary PPM/PGM as RGB in `[0, 1]`; grayscale is
/// expanded to three identical channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let rgb = decode(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    ImageRgb::new(w as usize, h as usize, data)
}

/// Loads a single-channel map. Colour files are reduced to luma.
pub fn load_graymap(path: impl AsRef<Path>) -> Result<GrayMap> {
    let path = path.as_ref();
    let l = decode(path)?.to_luma8();
    let (w, h) = l.dimensions();
    let data = l.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    GrayMap::new(w as usize, h as usize, data)
}

/// Loads a ground-truth mask; pixels `>= 128` are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let l = decode(path)?.to_luma8();
    let (w, h) = l.dimensions();
    BinaryMask::new(
        w as usize,
        h as usize,
        l.as_raw().iter().map(|&b| b >= 128).collect(),
    )
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn is_pnm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "pgm" || e == "ppm" || e == "pnm"
    )
}

fn encode_gray8(width: usize, height: usize, bytes: Vec<u8>, path: &Path) -> Result<Vec<u8>> {
    if is_pnm(path) {
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend_from_slice(&bytes);
        return Ok(out);
    }
    let img = image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::Shape("gray buffer size".into()))?;
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(buf.into_inner())
}

/// Writes an 8-bit grayscale raster (PGM for `.pgm`, PNG otherwise), storing
/// `round(v·255)`.
pub fn save_graymap(map: &GrayMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = map.data.iter().map(|&v| quantize(v)).collect();
    let encoded = encode_gray8(map.width, map.height, bytes, path)?;
    write_atomic(path, &encoded)
}

/// Writes an 8-bit RGB raster (PPM for `.ppm`, PNG otherwise).
pub fn save_image(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let encoded = if is_pnm(path) {
        let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
        out.extend_from_slice(&bytes);
        out
    } else {
        let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
            .ok_or_else(|| Error::Shape("rgb buffer size".into()))?;
        let mut cur = Cursor::new(Vec::new());
        buf.write_to(&mut cur, ImageFormat::Png)
            .map_err(|e| Error::format(path, e.to_string()))?;
        cur.into_inner()
    };
    write_atomic(path, &encoded)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let encoded = encode_gray8(mask.width, mask.height, bytes, path)?;
    write_atomic(path, &encoded)
}

/// Debug dump of a label map as a 16-bit binary PGM (big-endian samples).
pub fn save_labels_pgm16(
    width: usize,
    height: usize,
    labels: &[usize],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let max = labels.iter().copied().max().unwrap_or(0).clamp(1, 65535);
    let mut out = format!("P5\n{width} {height}\n{max}\n").into_bytes();
    for &l in labels {
        out.extend_from_slice(&(l.min(65535) as u16).to_be_bytes());
    }
    write_atomic(path, &out)
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = temp_sibling(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

// ---------------------------------------------------------------------------
// Tensor files: "SALT", u32 version = 1, u32 K, u32 m, u32 h, then K·m·h
// little-endian f32. Checkpoints concatenate several records.

pub const TENSOR_MAGIC: &[u8; 4] = b"SALT";
pub const TENSOR_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_tensor(t: &Tensor3) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + t.data.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    for v in [
        TENSOR_VERSION,
        t.channels as u32,
        t.rows as u32,
        t.cols as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decodes one record at the start of `bytes`; returns it with the number of
/// bytes consumed.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<(Tensor3, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated tensor header"));
    }
    if &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::format(path, "bad magic, expected SALT"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != TENSOR_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let (k, m, h) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let n = k
        .checked_mul(m)
        .and_then(|x| x.checked_mul(h))
        .ok_or_else(|| Error::format(path, "tensor shape overflows"))?;
    let end = HEADER_LEN + n * 4;
    if bytes.len() < end {
        return Err(Error::format(
            path,
            format!(
                "payload holds {} values, header ({k},{m},{h}) needs {n}",
                (bytes.len() - HEADER_LEN) / 4
            ),
        ));
    }
    let data = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let t = Tensor3::new(k, m, h, data).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((t, end))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<FeatureStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, used) = decode_tensor(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after payload", bytes.len() - used),
        ));
    }
    Ok(t)
}

pub fn save_tensor(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_tensor(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn ppm_red_pixel() {
        let d = tmp();
        let p = d.path().join("red.ppm");
        let mut bytes = b"P6\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0]);
        fs::write(&p, bytes).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn black_png_and_gray_pgm() {
        let d = tmp();
        let p = d.path().join("black.png");
        image::GrayImage::new(2, 2).save(&p).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert!(img.data().iter().all(|&v| v == 0.0));

        let p = d.path().join("g.pgm");
        let mut bytes = b"P5\n1 1\n255\n".to_vec();
        bytes.push(128);
        fs::write(&p, bytes).unwrap();
        let v = 128.0 / 255.0;
        assert_eq!(load_image(&p).unwrap().data(), &[v, v, v]);
    }

    #[test]
    fn load_errors() {
        let d = tmp();
        assert!(matches!(
            load_image(d.path().join("nope.png")),
            Err(Error::Io { .. })
        ));
        let p = d.path().join("bad.pgm");
        fs::write(&p, b"P5\nxx yy\n255\n").unwrap();
        assert!(load_image(&p).is_err());
        let p = d.path().join("deep.png");
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(2, 2)
            .save(&p)
            .unwrap();
        assert!(matches!(load_image(&p), Err(Error::BitDepth { .. })));
    }

    #[test]
    fn save_quantization() {
        let d = tmp();
        let p = d.path().join("m.png");
        save_graymap(&GrayMap::new(3, 1, vec![0.0, 1.0, 0.5]).unwrap(), &p).unwrap();
        let raw = image::open(&p).unwrap().to_luma8();
        assert_eq!(raw.as_raw(), &[0, 255, 128]);
        let p = d.path().join("m.pgm");
        save_graymap(&GrayMap::new(1, 1, vec![0.5]).unwrap(), &p).unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"P5\n1 1\n255\n\x80");
    }

    #[test]
    fn tensor_examples() {
        let d = tmp();
        let p = d.path().join("t.salt");
        let mut bytes = b"SALT".to_vec();
        for v in [1u32, 1, 1, 1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&3.5f32.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        let t = load_tensor(&p).unwrap();
        assert_eq!(t.shape(), (1, 1, 1));
        assert_eq!(t.data, vec![3.5]);

        let vals: Vec<f64> = (0..8).map(|v| v as f64).collect();
        let t = Tensor3::new(2, 2, 2, vals.clone()).unwrap();
        save_tensor(&t, &p).unwrap();
        let back = load_tensor(&p).unwrap();
        assert_eq!(back.plane(1), &vals[4..]);

        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_tensor(&p), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&p, &bad).unwrap();
        assert!(load_tensor(&p).is_err());
    }

    #[test]
    fn resize_examples() {
        let m = GrayMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(m.resize_bilinear(3, 1).unwrap().data(), &[0.0, 0.5, 1.0]);
        let c = GrayMap::filled(3, 2, 0.7);
        let r = c.resize_bilinear(7, 5).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
        assert!(m.resize_bilinear(0, 1).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = |v: Vec<f64>| {
            let w = v.len();
            normalize_unit(&RealMap::new(w, 1, v).unwrap())
                .unwrap()
                .data()
                .to_vec()
        };
        assert_eq!(n(vec![2.0, 4.0]), vec![0.0, 1.0]);
        assert_eq!(n(vec![5.0, 5.0, 5.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(n(vec![1.0, 2.0, 3.0]), vec![0.0, 0.5, 1.0]);
        assert!(normalize_unit(&RealMap::new(1, 1, vec![f64::NAN]).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn graymap_save_load_roundtrip(vals in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let d = tmp();
            let p = d.path().join("r.png");
            let m = GrayMap::new(4, 3, vals).unwrap();
            save_graymap(&m, &p).unwrap();
            let back = load_graymap(&p).unwrap();
            for (a, b) in m.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 255.0);
            }
        }

        #[test]
        fn normalize_hits_endpoints(vals in proptest::collection::vec(-50.0f64..50.0, 2..40)) {
            let w = vals.len();
            let out = normalize_unit(&RealMap::new(w, 1, vals.clone()).unwrap()).unwrap();
            let lo = out.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = out.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if vals.iter().any(|&v| v != vals[0]) {
                prop_assert_eq!(lo, 0.0);
                prop_assert_eq!(hi, 1.0);
            }
        }

        #[test]
        fn resize_identity_and_range(vals in proptest::collection::vec(0.0f64..=1.0, 20), w in 1usize..12, h in 1usize..12) {
            let m = GrayMap::new(5, 4, vals).unwrap();
            prop_assert_eq!(m.resize_bilinear(5, 4).unwrap(), m.clone());
            let r = m.resize_bilinear(w, h).unwrap();
            prop_assert!(r.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
