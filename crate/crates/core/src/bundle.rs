//! On-disk activation bundles (`.dphb`).
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! [0..4)   magic "DPHB"
//! [4..6)   format version, u16 = 1
//! [6..10)  header JSON length, u32
//! header JSON (UTF-8, canonical serde_json encoding, see below)
//! labels          N x u32
//! logits          N x C f32, row-major
//! activations     for each layer in declared order, N x M f32, row-major
//! thumbnails      only if has_thumbnails: (N + 1) x u64 offsets relative to
//!                 the blob start, then the concatenated PNG blobs
//! ```
//!
//! The header JSON carries `header_digest`, the hex SHA-256 of the canonical
//! header encoding with the digest set to the empty string. Parsing rejects a
//! header whose bytes are not exactly the canonical encoding or whose digest
//! does not match, so a corrupted header byte never yields a different bundle.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAGIC: [u8; 4] = *b"DPHB";
pub const FORMAT_VERSION: u16 = 1;
pub const FILE_EXTENSION: &str = "dphb";

const PREAMBLE_LEN: usize = 10;
const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated bundle: section `{section}` needs {needed} bytes at offset {offset}, {available} available")]
    Bounds {
        section: String,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("non-finite value in `{section}` at row {row}, column {column}")]
    NonFinite {
        section: String,
        row: usize,
        column: usize,
    },
}

impl BundleError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        BundleError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Dense row-major matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, BundleError> {
        match rows.checked_mul(cols) {
            Some(len) if len == data.len() => Ok(Matrix { rows, cols, data }),
            _ => Err(BundleError::invalid(
                "matrix",
                format!("{} values do not fill {rows}x{cols}", data.len()),
            )),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, BundleError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(BundleError::invalid(
                "matrix",
                format!("row {bad} has {} columns, expected {cols}", rows[bad].len()),
            ));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f32> + '_ {
        self.data.iter().skip(col).step_by(self.cols.max(1)).copied()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / self.cols, i % self.cols))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub neuron_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleHeader {
    pub dataset_name: String,
    pub class_names: Vec<String>,
    pub image_count: usize,
    pub layer_specs: Vec<LayerSpec>,
    pub has_thumbnails: bool,
}

impl BundleHeader {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<(), BundleError> {
        if self.class_names.len() < 2 {
            return Err(BundleError::invalid(
                "class_names",
                format!("need at least 2 classes, got {}", self.class_names.len()),
            ));
        }
        if let Some(dup) = first_duplicate(self.class_names.iter()) {
            return Err(BundleError::invalid(
                "class_names",
                format!("duplicate class name {dup:?}"),
            ));
        }
        if self.image_count == 0 {
            return Err(BundleError::invalid("image_count", "must be at least 1"));
        }
        if self.layer_specs.is_empty() {
            return Err(BundleError::invalid("layer_specs", "at least one layer required"));
        }
        if let Some(spec) = self.layer_specs.iter().find(|l| l.neuron_count == 0) {
            return Err(BundleError::invalid(
                "layer_specs",
                format!("layer {:?} has no neurons", spec.name),
            ));
        }
        if let Some(dup) = first_duplicate(self.layer_specs.iter().map(|l| &l.name)) {
            return Err(BundleError::invalid(
                "layer_specs",
                format!("duplicate layer name {dup:?}"),
            ));
        }
        Ok(())
    }
}

fn first_duplicate<'a>(names: impl Iterator<Item = &'a String>) -> Option<&'a String> {
    let mut seen = HashSet::new();
    names.into_iter().find(|n| !seen.insert(n.as_str()))
}

/// Header, labels, logits, per-layer activations and thumbnails.
pub type BundleParts = (BundleHeader, Vec<u32>, Matrix, Vec<Matrix>, Option<Vec<Vec<u8>>>);

/// One dataset: labels, logits, raw per-layer activations and optional thumbnails.
///
/// Construction validates every invariant, so a `DatasetBundle` in hand is
/// always well-formed.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    header: BundleHeader,
    labels: Vec<u32>,
    logits: Matrix,
    activations: Vec<Matrix>,
    thumbnails: Option<Vec<Vec<u8>>>,
}

impl DatasetBundle {
    pub fn new(
        header: BundleHeader,
        labels: Vec<u32>,
        logits: Matrix,
        activations: Vec<Matrix>,
        thumbnails: Option<Vec<Vec<u8>>>,
    ) -> Result<Self, BundleError> {
        let bundle = DatasetBundle {
            header,
            labels,
            logits,
            activations,
            thumbnails,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), BundleError> {
        let h = &self.header;
        h.validate()?;
        let n = h.image_count;
        let c = h.class_count();
        if self.labels.len() != n {
            return Err(BundleError::invalid(
                "labels",
                format!("{} labels for {n} images", self.labels.len()),
            ));
        }
        if let Some(i) = self.labels.iter().position(|&l| l as usize >= c) {
            return Err(BundleError::invalid(
                "labels",
                format!("label {} of image {i} is not below class count {c}", self.labels[i]),
            ));
        }
        if self.logits.rows() != n || self.logits.cols() != c {
            return Err(BundleError::invalid(
                "logits",
                format!(
                    "shape {}x{}, expected {n}x{c}",
                    self.logits.rows(),
                    self.logits.cols()
                ),
            ));
        }
        if let Some((row, column)) = self.logits.first_non_finite() {
            return Err(BundleError::NonFinite {
                section: "logits".into(),
                row,
                column,
            });
        }
        if self.activations.len() != h.layer_specs.len() {
            return Err(BundleError::invalid(
                "activations",
                format!(
                    "{} matrices for {} declared layers",
                    self.activations.len(),
                    h.layer_specs.len()
                ),
            ));
        }
        for (spec, matrix) in h.layer_specs.iter().zip(&self.activations) {
            if matrix.rows() != n || matrix.cols() != spec.neuron_count {
                return Err(BundleError::invalid(
                    format!("activations[{}]", spec.name),
                    format!(
                        "shape {}x{}, expected {n}x{}",
                        matrix.rows(),
                        matrix.cols(),
                        spec.neuron_count
                    ),
                ));
            }
            if let Some((row, column)) = matrix.first_non_finite() {
                return Err(BundleError::NonFinite {
                    section: spec.name.clone(),
                    row,
                    column,
                });
            }
        }
        match (&self.thumbnails, h.has_thumbnails) {
            (None, false) => {}
            (Some(thumbs), true) => {
                if thumbs.len() != n {
                    return Err(BundleError::invalid(
                        "thumbnails",
                        format!("{} thumbnails for {n} images", thumbs.len()),
                    ));
                }
                if let Some(i) = thumbs
                    .iter()
                    .position(|t| !t.is_empty() && !t.starts_with(&PNG_SIGNATURE))
                {
                    return Err(BundleError::invalid(
                        "thumbnails",
                        format!("thumbnail {i} is not a PNG"),
                    ));
                }
            }
            (Some(_), false) => {
                return Err(BundleError::invalid(
                    "has_thumbnails",
                    "thumbnails present but header says none",
                ))
            }
            (None, true) => {
                return Err(BundleError::invalid(
                    "has_thumbnails",
                    "header declares thumbnails but none supplied",
                ))
            }
        }
        Ok(())
    }

    pub fn header(&self) -> &BundleHeader {
        &self.header
    }

    pub fn name(&self) -> &str {
        &self.header.dataset_name
    }

    pub fn class_names(&self) -> &[String] {
        &self.header.class_names
    }

    pub fn image_count(&self) -> usize {
        self.header.image_count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.header.layer_specs
    }

    pub fn layer(&self, name: &str) -> Option<&Matrix> {
        self.header
            .layer_specs
            .iter()
            .position(|l| l.name == name)
            .map(|i| &self.activations[i])
    }

    pub fn activations(&self) -> &[Matrix] {
        &self.activations
    }

    pub fn thumbnails(&self) -> Option<&[Vec<u8>]> {
        self.thumbnails.as_deref()
    }

    /// PNG bytes for one image; `None` if the bundle has no thumbnails or the blob is empty.
    pub fn thumbnail(&self, image: usize) -> Option<&[u8]> {
        self.thumbnails
            .as_ref()?
            .get(image)
            .map(Vec::as_slice)
            .filter(|t| !t.is_empty())
    }

    pub fn into_parts(self) -> BundleParts {
        (
            self.header,
            self.labels,
            self.logits,
            self.activations,
            self.thumbnails,
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderJson {
    dataset_name: String,
    class_names: Vec<String>,
    image_count: u64,
    layer_specs: Vec<LayerSpec>,
    has_thumbnails: bool,
    header_digest: String,
}

impl HeaderJson {
    fn digest(&self) -> String {
        let unsigned = HeaderJson {
            header_digest: String::new(),
            dataset_name: self.dataset_name.clone(),
            class_names: self.class_names.clone(),
            image_count: self.image_count,
            layer_specs: self.layer_specs.clone(),
            has_thumbnails: self.has_thumbnails,
        };
        let bytes = serde_json::to_vec(&unsigned).expect("header serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn encode_header(header: &BundleHeader) -> Vec<u8> {
    let mut json = HeaderJson {
        dataset_name: header.dataset_name.clone(),
        class_names: header.class_names.clone(),
        image_count: header.image_count as u64,
        layer_specs: header.layer_specs.clone(),
        has_thumbnails: header.has_thumbnails,
        header_digest: String::new(),
    };
    json.header_digest = json.digest();
    serde_json::to_vec(&json).expect("header serializes")
}

fn decode_header(bytes: &[u8]) -> Result<BundleHeader, BundleError> {
    let json: HeaderJson = serde_json::from_slice(bytes)
        .map_err(|e| BundleError::Format(format!("header JSON: {e}")))?;
    if json.header_digest != json.digest() {
        return Err(BundleError::Format("header digest mismatch".into()));
    }
    if serde_json::to_vec(&json).expect("header serializes") != bytes {
        return Err(BundleError::Format("header JSON is not in canonical form".into()));
    }
    let image_count = usize::try_from(json.image_count)
        .map_err(|_| BundleError::invalid("image_count", "does not fit in memory"))?;
    let header = BundleHeader {
        dataset_name: json.dataset_name,
        class_names: json.class_names,
        image_count,
        layer_specs: json.layer_specs,
        has_thumbnails: json.has_thumbnails,
    };
    header.validate()?;
    Ok(header)
}

/// Serializes a bundle to bytes in the `.dphb` layout.
pub fn encode_bundle(bundle: &DatasetBundle) -> Result<Vec<u8>, BundleError> {
    bundle.validate()?;
    let header = encode_header(&bundle.header);
    let header_len = u32::try_from(header.len())
        .map_err(|_| BundleError::invalid("header", "header JSON exceeds 4 GiB"))?;

    let floats = bundle.logits.as_slice().len()
        + bundle.activations.iter().map(|m| m.as_slice().len()).sum::<usize>();
    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + 4 * (bundle.labels.len() + floats));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for label in &bundle.labels {
        out.extend_from_slice(&label.to_le_bytes());
    }
    for matrix in std::iter::once(&bundle.logits).chain(&bundle.activations) {
        for v in matrix.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(thumbs) = &bundle.thumbnails {
        let mut offset = 0u64;
        out.extend_from_slice(&offset.to_le_bytes());
        for t in thumbs {
            offset += t.len() as u64;
            out.extend_from_slice(&offset.to_le_bytes());
        }
        for t in thumbs {
            out.extend_from_slice(t);
        }
    }
    Ok(out)
}

/// Writes a bundle to `sink`, returning the number of bytes written.
pub fn write_bundle<W: Write>(bundle: &DatasetBundle, mut sink: W) -> Result<u64, BundleError> {
    let bytes = encode_bundle(bundle)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len() as u64)
}

pub fn save_bundle(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<u64, BundleError> {
    let file = File::create(path)?;
    write_bundle(bundle, BufWriter::new(file))
}

pub fn read_bundle<R: Read>(mut source: R) -> Result<DatasetBundle, BundleError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_bundle(&bytes)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<DatasetBundle, BundleError> {
    read_bundle(File::open(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, section: &str, len: Option<usize>) -> Result<&'a [u8], BundleError> {
        let available = self.bytes.len() - self.pos;
        match len {
            Some(len) if len <= available => {
                let out = &self.bytes[self.pos..self.pos + len];
                self.pos += len;
                Ok(out)
            }
            _ => Err(BundleError::Bounds {
                section: section.to_string(),
                offset: self.pos,
                needed: len.unwrap_or(usize::MAX),
                available,
            }),
        }
    }

    fn matrix(&mut self, section: &str, rows: usize, cols: usize) -> Result<Matrix, BundleError> {
        let raw = self.take(section, rows.checked_mul(cols).and_then(|n| n.checked_mul(4)))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Matrix { rows, cols, data })
    }
}

/// Decodes and validates a bundle from its serialized bytes.
pub fn parse_bundle(bytes: &[u8]) -> Result<DatasetBundle, BundleError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take("magic", Some(4))? != MAGIC {
        return Err(BundleError::Format("bad magic, expected \"DPHB\"".into()));
    }
    let version = cur.take("version", Some(2))?;
    let version = u16::from_le_bytes([version[0], version[1]]);
    if version != FORMAT_VERSION {
        return Err(BundleError::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let len = cur.take("header_length", Some(4))?;
    let len = u32::from_le_bytes([len[0], len[1], len[2], len[3]]) as usize;
    let header = decode_header(cur.take("header", Some(len))?)?;

    let n = header.image_count;
    let labels = cur
        .take("labels", n.checked_mul(4))?
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let logits = cur.matrix("logits", n, header.class_count())?;
    let mut activations = Vec::with_capacity(header.layer_specs.len());
    for spec in &header.layer_specs {
        activations.push(cur.matrix(
            &format!("activations[{}]", spec.name),
            n,
            spec.neuron_count,
        )?);
    }

    let thumbnails = if header.has_thumbnails {
        let table_len = n.checked_add(1).and_then(|k| k.checked_mul(8));
        let offsets: Vec<u64> = cur
            .take("thumbnail_offsets", table_len)?
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[1] < w[0]) {
            return Err(BundleError::Format(
                "thumbnail offsets must start at 0 and be non-decreasing".into(),
            ));
        }
        let blob_len = usize::try_from(offsets[n]).ok();
        let blob = cur.take("thumbnails", blob_len)?;
        Some(
            offsets
                .windows(2)
                .map(|w| blob[w[0] as usize..w[1] as usize].to_vec())
                .collect(),
        )
    } else {
        None
    };

    if cur.pos != bytes.len() {
        return Err(BundleError::Format(format!(
            "{} trailing bytes after final section",
            bytes.len() - cur.pos
        )));
    }
    DatasetBundle::new(header, labels, logits, activations, thumbnails)
}

/// Offset of the first byte of each section, in file order. Used by tools that
/// slice or inspect files without decoding them.
pub fn section_offsets(bundle: &DatasetBundle) -> Vec<(String, usize)> {
    let header_len = encode_header(&bundle.header).len();
    let n = bundle.image_count();
    let mut pos = PREAMBLE_LEN + header_len;
    let mut out = vec![("header".to_string(), PREAMBLE_LEN), ("labels".to_string(), pos)];
    pos += 4 * n;
    out.push(("logits".to_string(), pos));
    pos += 4 * n * bundle.header.class_count();
    for spec in &bundle.header.layer_specs {
        out.push((format!("activations[{}]", spec.name), pos));
        pos += 4 * n * spec.neuron_count;
    }
    if bundle.header.has_thumbnails {
        out.push(("thumbnail_offsets".to_string(), pos));
        pos += 8 * (n + 1);
        out.push(("thumbnails".to_string(), pos));
    }
    out
}
