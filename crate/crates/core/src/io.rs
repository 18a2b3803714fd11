//! File formats: sample CSVs, grayscale images (PGM P2/P5, single-channel
//! PNG), PGM output and TOML model files.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{GaussianModel, SampleSet};

// ---------------------------------------------------------------------------
// Sample CSV: header `x1,...,xn,yhat,u`
// ---------------------------------------------------------------------------

fn check_header(fields: &[&str]) -> Result<usize> {
    if fields.len() < 3 {
        return Err(Error::MalformedHeader(format!(
            "expected x1..xn,yhat,u, got {:?}",
            fields.join(",")
        )));
    }
    let n = fields.len() - 2;
    for (j, name) in fields[..n].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(Error::MalformedHeader(format!(
                "column {} is {name:?}, expected \"x{}\"",
                j + 1,
                j + 1
            )));
        }
    }
    if fields[n] != "yhat" || fields[n + 1] != "u" {
        return Err(Error::MalformedHeader(format!(
            "last two columns must be yhat,u, got {},{}",
            fields[n],
            fields[n + 1]
        )));
    }
    Ok(n)
}

/// Parses a sample CSV from a reader. Row numbers in errors are 1-based
/// data rows (the header is row 0); columns are 1-based.
pub fn read_samples_csv<R: std::io::Read>(input: R) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let csv_err = |e: csv::Error| Error::CorruptFile(e.to_string());
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::MalformedHeader("file is empty".into()))?
        .map_err(csv_err)?;
    let fields: Vec<&str> = header.iter().collect();
    let n = check_header(&fields)?;
    let width = n + 2;
    let mut values: Vec<f64> = Vec::new();
    let mut m = 0;
    for (k, record) in records.enumerate() {
        let record = record.map_err(csv_err)?;
        let row = k + 1;
        if record.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(x) if x.is_finite() => values.push(x),
                _ => {
                    return Err(Error::NonNumericCell {
                        row,
                        column: j + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
        m += 1;
    }
    if m == 0 {
        return Err(Error::InvalidCount(0));
    }
    let features = DMatrix::from_fn(m, n, |i, j| values[i * width + j]);
    let predictions = DVector::from_fn(m, |i, _| values[i * width + n]);
    let summaries = DVector::from_fn(m, |i, _| values[i * width + n + 1]);
    SampleSet::new(features, predictions, summaries)
}

pub fn load_samples_csv(path: &Path) -> Result<SampleSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_samples_csv(std::io::BufReader::new(file))
}

/// Writes shortest round-trip decimal representations, so reading the file
/// back reproduces every value exactly.
pub fn write_samples<W: Write>(samples: &SampleSet, out: W) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    let n = samples.n();
    let header: Vec<String> = (1..=n)
        .map(|j| format!("x{j}"))
        .chain(["yhat".to_string(), "u".to_string()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..samples.m() {
        for j in 0..n {
            write!(out, "{:?},", samples.features()[(i, j)])?;
        }
        writeln!(
            out,
            "{:?},{:?}",
            samples.predictions()[i],
            samples.summaries()[i]
        )?;
    }
    out.flush()
}

pub fn write_samples_csv(samples: &SampleSet, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_samples(samples, file).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Grayscale images
// ---------------------------------------------------------------------------

/// Row-major grayscale intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(pixels.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "pixel intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

pub fn load_grayscale_image(path: &Path) -> Result<ImageGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grayscale(&bytes)
}

/// Decodes PGM (P2/P5) or single-channel PNG bytes.
pub fn decode_grayscale(bytes: &[u8]) -> Result<ImageGrid> {
    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG_MAGIC) {
        return decode_png(bytes);
    }
    match bytes.get(..2) {
        Some(b"P2") => decode_pgm(bytes, false),
        Some(b"P5") => decode_pgm(bytes, true),
        Some(b"P1") | Some(b"P4") => Err(Error::UnsupportedFormat(
            "bitmap PBM; convert to grayscale PGM".into(),
        )),
        Some(b"P3") | Some(b"P6") => Err(Error::UnsupportedFormat(
            "color PPM; convert to grayscale PGM".into(),
        )),
        _ => Err(Error::UnsupportedFormat(
            "expected PGM (P2/P5) or grayscale PNG".into(),
        )),
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::CorruptFile(format!("missing or invalid {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptFile(format!("{what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8], binary: bool) -> Result<ImageGrid> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptFile("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptFile(format!("maxval {maxval} out of range")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::CorruptFile("image too large".into()))?;
    let scale = f64::from(maxval);
    let mut raw = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::CorruptFile("missing raster separator".into())),
        }
        let data = &bytes[cur.pos..];
        let wide = maxval > 255;
        let needed = count * if wide { 2 } else { 1 };
        if data.len() < needed {
            return Err(Error::CorruptFile(format!(
                "raster truncated: {} of {needed} bytes",
                data.len()
            )));
        }
        if wide {
            raw.extend(data[..needed].chunks_exact(2).map(|p| u32::from(u16::from_be_bytes([p[0], p[1]]))));
        } else {
            raw.extend(data[..needed].iter().map(|&b| u32::from(b)));
        }
    } else {
        for k in 0..count {
            raw.push(cur.number("pixel").map_err(|_| {
                Error::CorruptFile(format!("raster truncated at pixel {k} of {count}"))
            })?);
        }
    }
    if let Some(bad) = raw.iter().find(|&&v| v > maxval) {
        return Err(Error::CorruptFile(format!("pixel value {bad} exceeds maxval {maxval}")));
    }
    let pixels = raw.into_iter().map(|v| f64::from(v) / scale).collect();
    ImageGrid::new(width, height, pixels)
}

fn decode_png(bytes: &[u8]) -> Result<ImageGrid> {
    let corrupt = |e: png::DecodingError| Error::CorruptFile(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "PNG color type {color:?}; convert to single-channel grayscale"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptFile("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf.chunks(info.line_size).take(height) {
        match depth {
            png::BitDepth::Sixteen => pixels.extend(
                row.chunks_exact(2)
                    .take(width)
                    .map(|p| f64::from(u16::from_be_bytes([p[0], p[1]])) / 65535.0),
            ),
            _ => pixels.extend(row.iter().take(width).map(|&b| f64::from(b) / 255.0)),
        }
    }
    ImageGrid::new(width, height, pixels)
}

/// Plain (P2) PGM with maxval 255; intensities are rounded.
pub fn write_pgm<W: Write>(image: &ImageGrid, out: W) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "P2")?;
    writeln!(out, "{} {}", image.width(), image.height())?;
    writeln!(out, "255")?;
    for r in 0..image.height() {
        let line: Vec<String> = (0..image.width())
            .map(|c| format!("{}", (image.get(r, c) * 255.0).round() as u8))
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()
}

// ---------------------------------------------------------------------------
// TOML model files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CovarianceSpec {
    /// `"identity"`
    Named(String),
    /// `{ diag = [..] }`
    Diagonal { diag: Vec<f64> },
    /// Dense row list.
    Dense(Vec<Vec<f64>>),
}

/// `cov_x`, `w`, `v` as written in a model TOML file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub cov_x: CovarianceSpec,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn build(&self) -> Result<GaussianModel> {
        let n = self.w.len();
        let cov = match &self.cov_x {
            CovarianceSpec::Named(name) if name == "identity" => DMatrix::identity(n, n),
            CovarianceSpec::Named(name) => {
                return Err(Error::Config(format!(
                    "unknown covariance shorthand {name:?} (expected \"identity\")"
                )))
            }
            CovarianceSpec::Diagonal { diag } => {
                DMatrix::from_diagonal(&DVector::from_row_slice(diag))
            }
            CovarianceSpec::Dense(rows) => {
                let k = rows.len();
                if rows.iter().any(|r| r.len() != k) {
                    return Err(Error::DimensionMismatch(
                        "dense cov_x must be square".into(),
                    ));
                }
                DMatrix::from_fn(k, k, |i, j| rows[i][j])
            }
        };
        GaussianModel::new(
            cov,
            DVector::from_row_slice(&self.w),
            DVector::from_row_slice(&self.v),
        )
    }
}
