//! Embedding/distance matrix files, item manifests and dataset directories.
//!
//! Matrix file layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "REID"
//! 4       4     version (u32) = 1
//! 8       8     rows (u64)
//! 16      8     cols (u64)
//! 24      4     reserved, written as zero
//! 28      8·r·c payload, IEEE-754 binary64, row-major
//! ```
//!
//! Manifests are UTF-8 text, one `image_id,identity,camera_id,track_id,split`
//! record per line. Optional fields are left empty; `#` starts a comment line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{ReidError, Result};
use crate::matrix::{EmbeddingMatrix, Matrix};

pub const MAGIC: &[u8; 4] = b"REID";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const META_DIR: &str = "meta";

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ReidError::MissingFile(path.to_path_buf()),
        _ => ReidError::IoFailure(e),
    })
}

/// Decodes a matrix from the binary format, validating every value is finite.
pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(ReidError::BadMagic {
            path: path.to_path_buf(),
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(ReidError::ShapeMismatch(format!(
            "header truncated: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ReidError::UnsupportedVersion(version));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n == payload.len() as u64);
    if expected.is_none() {
        return Err(ReidError::ShapeMismatch(format!(
            "header declares {rows}x{cols}, payload has {} bytes",
            payload.len()
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(ReidError::ShapeMismatch(format!(
            "empty matrix {rows}x{cols}"
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = Matrix::new(rows as usize, cols as usize, data)?;
    m.ensure_finite()?;
    Ok(m)
}

pub fn encode_matrix(matrix: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.as_slice().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    decode_matrix(&bytes, path)
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&encode_matrix(matrix))?;
    f.flush()?;
    Ok(())
}

/// Distance matrices share the embedding file format.
pub use self::load_embeddings as load_matrix;
pub use self::save_embeddings as save_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Query,
    Gallery,
    Train,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Query => "query",
            Split::Gallery => "gallery",
            Split::Train => "train",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "query" => Ok(Split::Query),
            "gallery" => Ok(Split::Gallery),
            "train" => Ok(Split::Train),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemRecord {
    pub image_id: String,
    pub identity: Option<u64>,
    pub camera_id: u64,
    pub track_id: Option<u64>,
    pub split: Split,
}

impl ItemRecord {
    pub fn new(image_id: impl Into<String>, split: Split) -> Self {
        Self {
            image_id: image_id.into(),
            identity: None,
            camera_id: 0,
            track_id: None,
            split,
        }
    }

    pub fn identity(mut self, identity: u64) -> Self {
        self.identity = Some(identity);
        self
    }

    pub fn camera(mut self, camera_id: u64) -> Self {
        self.camera_id = camera_id;
        self
    }

    pub fn track(mut self, track_id: u64) -> Self {
        self.track_id = Some(track_id);
        self
    }
}

/// Ordered item records. Row `i` of any aligned matrix describes `items()[i]`.
///
/// Construction enforces unique ids within a split and single-split tracks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemManifest {
    items: Vec<ItemRecord>,
}

impl ItemManifest {
    pub fn new(items: Vec<ItemRecord>) -> Result<Self> {
        let mut seen: HashSet<(Split, &str)> = HashSet::new();
        let mut track_split: HashMap<u64, Split> = HashMap::new();
        for item in &items {
            if !seen.insert((item.split, item.image_id.as_str())) {
                return Err(ReidError::DuplicateId(item.image_id.clone()));
            }
            if let Some(t) = item.track_id {
                let s = *track_split.entry(t).or_insert(item.split);
                if s != item.split {
                    return Err(ReidError::TrackSplitConflict(t));
                }
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Manifest positions of items in `split`, in manifest order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn query_indices(&self) -> Vec<usize> {
        self.indices_of(Split::Query)
    }

    pub fn gallery_indices(&self) -> Vec<usize> {
        self.indices_of(Split::Gallery)
    }

    pub fn queries(&self) -> Vec<&ItemRecord> {
        self.items
            .iter()
            .filter(|i| i.split == Split::Query)
            .collect()
    }

    pub fn gallery(&self) -> Vec<&ItemRecord> {
        self.items
            .iter()
            .filter(|i| i.split == Split::Gallery)
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            items.push(parse_record(line, line_no)?);
        }
        Self::new(items)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# image_id,identity,camera_id,track_id,split\n");
        for it in &self.items {
            let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                it.image_id,
                opt(it.identity),
                it.camera_id,
                opt(it.track_id),
                it.split
            ));
        }
        out
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<ItemRecord> {
    let err = |message: String| ReidError::ParseError {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    if fields[0].is_empty() {
        return Err(err("empty image_id".into()));
    }
    let opt_u64 = |name: &str, s: &str| -> Result<Option<u64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| err(format!("{name} {s:?} is not a nonnegative integer")))
        }
    };
    let camera_id =
        opt_u64("camera_id", fields[2])?.ok_or_else(|| err("camera_id is required".into()))?;
    Ok(ItemRecord {
        image_id: fields[0].to_string(),
        identity: opt_u64("identity", fields[1])?,
        camera_id,
        track_id: opt_u64("track_id", fields[3])?,
        split: fields[4].parse().map_err(err)?,
    })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<ItemManifest> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        ReidError::ParseError {
            line,
            message: "invalid UTF-8".into(),
        }
    })?;
    ItemManifest::parse(&text)
}

pub fn save_manifest(manifest: &ItemManifest, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, manifest.to_text())?;
    Ok(())
}

/// Auxiliary attribute embeddings (e.g. "color", "type"), row-aligned to a manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetadataFeatureSet {
    pub families: BTreeMap<String, EmbeddingMatrix>,
}

impl MetadataFeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, family: impl Into<String>, matrix: EmbeddingMatrix) {
        self.families.insert(family.into(), matrix);
    }

    pub fn get(&self, family: &str) -> Option<&EmbeddingMatrix> {
        self.families.get(family)
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `family` is `None` for the main embedding matrix.
    CountMismatch {
        family: Option<String>,
        expected: usize,
        found: usize,
    },
    NonFinite {
        family: Option<String>,
        row: usize,
        col: usize,
    },
    /// A track attached to items outside the gallery, where tracks cannot be averaged.
    OrphanTrack { track_id: u64, split: Split },
    /// A track whose items disagree on camera or identity.
    InconsistentTrack { track_id: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |fam: &Option<String>| match fam {
            Some(s) => format!("metadata family {s:?}"),
            None => "embeddings".to_string(),
        };
        match self {
            Violation::CountMismatch {
                family,
                expected,
                found,
            } => write!(
                f,
                "count mismatch: {} has {found} rows, manifest has {expected} items",
                name(family)
            ),
            Violation::NonFinite { family, row, col } => {
                write!(f, "non-finite value in {} at ({row}, {col})", name(family))
            }
            Violation::OrphanTrack { track_id, split } => {
                write!(f, "track {track_id} is attached to {split} items")
            }
            Violation::InconsistentTrack { track_id } => {
                write!(f, "track {track_id} mixes cameras or identities")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every consistency violation; never fails.
pub fn validate_dataset(
    manifest: &ItemManifest,
    emb: &EmbeddingMatrix,
    meta: Option<&MetadataFeatureSet>,
) -> ValidationReport {
    let mut violations = Vec::new();
    let n = manifest.len();
    let mut check = |family: Option<String>, m: &Matrix| {
        if m.rows() != n {
            violations.push(Violation::CountMismatch {
                family: family.clone(),
                expected: n,
                found: m.rows(),
            });
        }
        if let Some((row, col)) = m.first_non_finite() {
            violations.push(Violation::NonFinite { family, row, col });
        }
    };
    check(None, emb);
    if let Some(meta) = meta {
        for (name, m) in &meta.families {
            check(Some(name.clone()), m);
        }
    }

    let mut tracks: BTreeMap<u64, Vec<&ItemRecord>> = BTreeMap::new();
    for it in manifest.items() {
        if let Some(t) = it.track_id {
            tracks.entry(t).or_default().push(it);
        }
    }
    for (&track_id, members) in &tracks {
        let first = members[0];
        if first.split != Split::Gallery {
            violations.push(Violation::OrphanTrack {
                track_id,
                split: first.split,
            });
        }
        if members
            .iter()
            .any(|m| m.camera_id != first.camera_id || m.identity != first.identity)
        {
            violations.push(Violation::InconsistentTrack { track_id });
        }
    }
    ValidationReport { violations }
}

/// A manifest with its embeddings and optional metadata families.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: ItemManifest,
    pub embeddings: EmbeddingMatrix,
    pub meta: MetadataFeatureSet,
}

impl Dataset {
    /// Reads `manifest.csv`, `embeddings.bin` and every `meta/<family>.bin` under `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = load_manifest(dir.join(MANIFEST_FILE))?;
        let embeddings = load_embeddings(dir.join(EMBEDDINGS_FILE))?;
        let mut meta = MetadataFeatureSet::new();
        let meta_dir = dir.join(META_DIR);
        if meta_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&meta_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "bin"))
                .collect();
            paths.sort();
            for p in paths {
                let family = p.file_stem().unwrap().to_string_lossy().into_owned();
                meta.insert(family, load_embeddings(&p)?);
            }
        }
        Ok(Self {
            manifest,
            embeddings,
            meta,
        })
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        save_manifest(&self.manifest, dir.join(MANIFEST_FILE))?;
        save_embeddings(&self.embeddings, dir.join(EMBEDDINGS_FILE))?;
        if !self.meta.is_empty() {
            let meta_dir = dir.join(META_DIR);
            fs::create_dir_all(&meta_dir)?;
            for (name, m) in &self.meta.families {
                save_embeddings(m, meta_dir.join(format!("{name}.bin")))?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_dataset(&self.manifest, &self.embeddings, Some(&self.meta))
    }

    /// Fails with the first violation when the dataset is inconsistent.
    pub fn ensure_valid(&self) -> Result<()> {
        match self.validate().violations.first() {
            None => Ok(()),
            Some(v) => Err(ReidError::ShapeMismatch(v.to_string())),
        }
    }

    pub fn query_embeddings(&self) -> EmbeddingMatrix {
        self.embeddings.select_rows(&self.manifest.query_indices())
    }

    pub fn gallery_embeddings(&self) -> EmbeddingMatrix {
        self.embeddings
            .select_rows(&self.manifest.gallery_indices())
    }

    /// Query rows followed by gallery rows: the joint index space used for re-ranking.
    pub fn joint_embeddings(&self) -> EmbeddingMatrix {
        let mut idx = self.manifest.query_indices();
        idx.extend(self.manifest.gallery_indices());
        self.embeddings.select_rows(&idx)
    }

    /// `(query, gallery)` rows of one metadata family.
    pub fn meta_split(&self, family: &str) -> Option<(EmbeddingMatrix, EmbeddingMatrix)> {
        self.meta.get(family).map(|m| {
            (
                m.select_rows(&self.manifest.query_indices()),
                m.select_rows(&self.manifest.gallery_indices()),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn round_trip_small() {
        let dir = tmp();
        let p = dir.path().join("m.bin");
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        save_embeddings(&m, &p).unwrap();
        let back = load_embeddings(&p).unwrap();
        assert!(back.bitwise_eq(&m));
        assert_eq!(back.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn one_by_one_is_36_bytes() {
        let m = Matrix::new(1, 1, vec![0.0]).unwrap();
        let bytes = encode_matrix(&m);
        assert_eq!(bytes.len(), 36);
        assert_eq!(&bytes[..4], b"REID");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[24..28], &[0; 4]);
    }

    #[test]
    fn short_payload_is_shape_mismatch() {
        let m = Matrix::new(2, 3, vec![1.0; 6]).unwrap();
        let mut bytes = encode_matrix(&m);
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(
            decode_matrix(&bytes, Path::new("x")),
            Err(ReidError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn header_errors() {
        let p = Path::new("x");
        assert!(matches!(
            decode_matrix(b"", p),
            Err(ReidError::BadMagic { .. })
        ));
        assert!(matches!(
            decode_matrix(b"NOPE0000000000000000000000000000", p),
            Err(ReidError::BadMagic { .. })
        ));
        assert!(matches!(
            decode_matrix(b"REID\x01\x00", p),
            Err(ReidError::ShapeMismatch(_))
        ));
        let mut bytes = encode_matrix(&Matrix::new(1, 1, vec![1.0]).unwrap());
        bytes[4] = 2;
        assert!(matches!(
            decode_matrix(&bytes, p),
            Err(ReidError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn huge_declared_shape_does_not_allocate() {
        let mut bytes = encode_matrix(&Matrix::new(1, 1, vec![1.0]).unwrap());
        bytes[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        bytes[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            decode_matrix(&bytes, Path::new("x")),
            Err(ReidError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn non_finite_reports_location() {
        let m = Matrix::new(2, 2, vec![0.0, 1.0, 2.0, f64::INFINITY]).unwrap();
        let bytes = encode_matrix(&m);
        assert!(matches!(
            decode_matrix(&bytes, Path::new("x")),
            Err(ReidError::NonFiniteValue { row: 1, col: 1 })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_embeddings("/nonexistent/definitely/not.bin"),
            Err(ReidError::MissingFile(_))
        ));
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let m = Matrix::new(1, 1, vec![0.0]).unwrap();
        let err = save_embeddings(&m, "/nonexistent-dir/x.bin").unwrap_err();
        assert!(matches!(err, ReidError::IoFailure(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn manifest_two_lines() {
        let m = ItemManifest::parse("a,1,0,,query\nb,1,2,5,gallery\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.items()[1].track_id, Some(5));
        assert_eq!(m.items()[0].identity, Some(1));
    }

    #[test]
    fn manifest_comments_and_optional_fields() {
        let m = ItemManifest::parse("# header\n\nx,,3,,gallery\n").unwrap();
        assert_eq!(m.items()[0].identity, None);
        assert_eq!(m.items()[0].camera_id, 3);
    }

    #[test]
    fn manifest_errors() {
        assert!(matches!(
            ItemManifest::parse("a,1,0,,query\na,2,0,,query\n"),
            Err(ReidError::DuplicateId(id)) if id == "a"
        ));
        // same id in different splits is fine
        assert!(ItemManifest::parse("a,1,0,,query\na,1,0,,gallery\n").is_ok());
        assert!(matches!(
            ItemManifest::parse("a,1,0,7,query\nb,1,0,7,gallery\n"),
            Err(ReidError::TrackSplitConflict(7))
        ));
        assert!(matches!(
            ItemManifest::parse("# c\na,1,0,,query\nb,x,0,,query\n"),
            Err(ReidError::ParseError { line: 3, .. })
        ));
        assert!(matches!(
            ItemManifest::parse("a,1,0,query\n"),
            Err(ReidError::ParseError { line: 1, .. })
        ));
        assert!(matches!(
            ItemManifest::parse("a,1,0,,probe\n"),
            Err(ReidError::ParseError { line: 1, .. })
        ));
        assert!(matches!(
            ItemManifest::parse("a,1,,,query\n"),
            Err(ReidError::ParseError { line: 1, .. })
        ));
    }

    fn ten_item_manifest() -> ItemManifest {
        let items = (0..10)
            .map(|i| {
                let split = if i < 2 { Split::Query } else { Split::Gallery };
                let mut r = ItemRecord::new(format!("img{i}"), split)
                    .identity(i % 2)
                    .camera(1);
                if i >= 2 {
                    r = r.track(100 + i % 2);
                }
                r
            })
            .collect();
        ItemManifest::new(items).unwrap()
    }

    #[test]
    fn validate_consistent() {
        let man = ten_item_manifest();
        let emb = Matrix::zeros(10, 4);
        let mut meta = MetadataFeatureSet::new();
        meta.insert("color", Matrix::zeros(10, 3));
        assert!(validate_dataset(&man, &emb, Some(&meta)).is_ok());
    }

    #[test]
    fn validate_count_mismatches() {
        let man = ten_item_manifest();
        let r = validate_dataset(&man, &Matrix::zeros(9, 4), None);
        assert_eq!(
            r.violations,
            vec![Violation::CountMismatch {
                family: None,
                expected: 10,
                found: 9
            }]
        );
        let mut meta = MetadataFeatureSet::new();
        meta.insert("color", Matrix::zeros(8, 3));
        let r = validate_dataset(&man, &Matrix::zeros(10, 4), Some(&meta));
        assert_eq!(
            r.violations,
            vec![Violation::CountMismatch {
                family: Some("color".into()),
                expected: 10,
                found: 8
            }]
        );
    }

    #[test]
    fn validate_tracks() {
        let man = ItemManifest::parse("a,1,0,3,query\nb,1,0,4,gallery\nc,2,0,4,gallery\n").unwrap();
        let r = validate_dataset(&man, &Matrix::zeros(3, 1), None);
        assert_eq!(
            r.violations,
            vec![
                Violation::OrphanTrack {
                    track_id: 3,
                    split: Split::Query
                },
                Violation::InconsistentTrack { track_id: 4 }
            ]
        );
    }

    #[test]
    fn dataset_dir_round_trip() {
        let dir = tmp();
        let man = ten_item_manifest();
        let emb = Matrix::from_fn(10, 3, |i, j| (i * 3 + j) as f64);
        let mut meta = MetadataFeatureSet::new();
        meta.insert("color", Matrix::from_fn(10, 2, |i, j| (i + j) as f64 * 0.5));
        let ds = Dataset {
            manifest: man,
            embeddings: emb,
            meta,
        };
        ds.save_dir(dir.path()).unwrap();
        let back = Dataset::load_dir(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.query_embeddings().rows(), 2);
        assert_eq!(back.joint_embeddings().row(2), ds.embeddings.row(2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn encode_decode_is_bitwise_identity(
                rows in 1usize..6,
                cols in 1usize..6,
                seed in proptest::collection::vec(-1e300f64..1e300, 36),
            ) {
                let m = Matrix::new(rows, cols, seed[..rows * cols].to_vec()).unwrap();
                let back = decode_matrix(&encode_matrix(&m), Path::new("x")).unwrap();
                prop_assert!(back.bitwise_eq(&m));
            }

            #[test]
            fn any_wrong_payload_length_is_rejected(extra in 1usize..64, rows in 1usize..4, cols in 1usize..4) {
                let m = Matrix::new(rows, cols, vec![1.0; rows * cols]).unwrap();
                let mut bytes = encode_matrix(&m);
                let keep = bytes.len();
                bytes.resize(keep + extra, 0);
                prop_assert!(matches!(decode_matrix(&bytes, Path::new("x")), Err(ReidError::ShapeMismatch(_))));
                bytes.truncate(keep - extra.min(keep - HEADER_LEN));
                if bytes.len() != keep {
                    prop_assert!(matches!(decode_matrix(&bytes, Path::new("x")), Err(ReidError::ShapeMismatch(_))));
                }
            }

            #[test]
            fn manifest_parse_is_total(text in "[a-z0-9,#\n ]{0,80}") {
                match ItemManifest::parse(&text) {
                    Ok(m) => {
                        let records = text.lines().map(str::trim)
                            .filter(|l| !l.is_empty() && !l.starts_with('#')).count();
                        prop_assert_eq!(m.len(), records);
                    }
                    Err(ReidError::ParseError { line, .. }) => prop_assert!(line >= 1),
                    Err(ReidError::DuplicateId(_)) | Err(ReidError::TrackSplitConflict(_)) => {}
                    Err(e) => prop_assert!(false, "unexpected error {e}"),
                }
            }
        }
    }
}
