//! Patch-embedding matrices, the KEMB interchange format, image-set
//! manifests and per-set stacking.
//!
//! A KEMB file is laid out as follows (integers little-endian):
//!
//! ```text
//! 0..4    magic "KEMB"
//! 4       version (1)
//! 5       dtype code (0x01 = float32)
//! 6..8    reserved, zero
//! 8..12   u32 P (patch count)
//! 12..16  u32 D (embedding width)
//! 16..20  u32 J (metadata length)
//! 20..20+J  UTF-8 JSON {"image_id": .., "model_tag": ..}
//! then    P*D little-endian f32, row-major
//! ```

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"KEMB";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0x01;
pub const HEADER_LEN: usize = 20;

/// Tag written by the reference ViT-L/16 (ImageNet-21k) extractor.
pub const REFERENCE_MODEL_TAG: &str = "vit-l16-in21k";
pub const REFERENCE_PATCHES: usize = 196;
pub const REFERENCE_DIM: usize = 1024;

/// File extension used by [`DirStore`].
pub const KEMB_EXTENSION: &str = "kemb";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected \"KEMB\", found {found:02x?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported KEMB version {0} (expected {FORMAT_VERSION})")]
    VersionMismatch(u8),
    #[error("unsupported dtype code {0:#04x}")]
    UnsupportedDtype(u8),
    #[error("reserved header bytes are not zero")]
    ReservedNonZero,
    #[error("truncated file: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("size mismatch: header implies {expected} bytes, file has {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("empty shape ({patches}, {dim}); both dimensions must be >= 1")]
    EmptyShape { patches: usize, dim: usize },
    #[error("shape ({patches}, {dim}) does not match reference model {REFERENCE_MODEL_TAG} ({REFERENCE_PATCHES}, {REFERENCE_DIM})")]
    ReferenceShape { patches: usize, dim: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("shape too large for a KEMB file")]
    TooLarge,
    #[error("manifest {set_id:?} has no images")]
    EmptyManifest { set_id: String },
    #[error("manifest {set_id:?} lists image {image_id:?} more than once")]
    DuplicateImage { set_id: String, image_id: String },
    #[error("image {0:?} not found in store")]
    MissingImage(String),
    #[error("image {image_id:?} has width {found}, expected {expected}")]
    InconsistentDim {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("image {image_id:?} has model tag {found:?}, expected {expected:?}")]
    InconsistentModel {
        image_id: String,
        expected: String,
        found: String,
    },
    #[error("invalid manifest {path}: {message}")]
    ManifestParse { path: PathBuf, message: String },
}

impl EmbeddingError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One image's patch-embedding matrix, shape `(P, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbeddings {
    image_id: String,
    model_tag: String,
    patches: Array2<f32>,
}

impl PatchEmbeddings {
    /// Validates shape, finiteness and, for the reference tag, the 196x1024 shape.
    pub fn new(
        image_id: impl Into<String>,
        model_tag: impl Into<String>,
        patches: Array2<f32>,
    ) -> Result<Self, EmbeddingError> {
        let e = PatchEmbeddings {
            image_id: image_id.into(),
            model_tag: model_tag.into(),
            patches,
        };
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<(), EmbeddingError> {
        let (p, d) = self.patches.dim();
        if p == 0 || d == 0 {
            return Err(EmbeddingError::EmptyShape { patches: p, dim: d });
        }
        if self.model_tag == REFERENCE_MODEL_TAG && (p != REFERENCE_PATCHES || d != REFERENCE_DIM) {
            return Err(EmbeddingError::ReferenceShape { patches: p, dim: d });
        }
        if let Some(((row, col), _)) = self.patches.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { row, col });
        }
        Ok(())
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn patches(&self) -> ArrayView2<'_, f32> {
        self.patches.view()
    }

    pub fn n_patches(&self) -> usize {
        self.patches.nrows()
    }

    pub fn dim(&self) -> usize {
        self.patches.ncols()
    }

    pub fn into_patches(self) -> Array2<f32> {
        self.patches
    }
}

#[derive(Serialize, Deserialize)]
struct KembMetadata {
    image_id: String,
    model_tag: String,
}

/// Serializes to the KEMB byte layout. Deterministic in `e`.
pub fn encode(e: &PatchEmbeddings) -> Result<Vec<u8>, EmbeddingError> {
    e.validate()?;
    let (p, d) = e.patches.dim();
    let p32 = u32::try_from(p).map_err(|_| EmbeddingError::TooLarge)?;
    let d32 = u32::try_from(d).map_err(|_| EmbeddingError::TooLarge)?;
    let meta = serde_json::to_vec(&KembMetadata {
        image_id: e.image_id.clone(),
        model_tag: e.model_tag.clone(),
    })
    .map_err(|err| EmbeddingError::Metadata(err.to_string()))?;
    let j32 = u32::try_from(meta.len()).map_err(|_| EmbeddingError::TooLarge)?;

    let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + p * d * 4);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.push(DTYPE_F32);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&p32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    out.extend_from_slice(&j32.to_le_bytes());
    out.extend_from_slice(&meta);
    // logical (row-major) order regardless of the array's memory layout
    for v in e.patches.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parses a KEMB byte buffer.
pub fn decode(bytes: &[u8]) -> Result<PatchEmbeddings, EmbeddingError> {
    if bytes.len() < 4 {
        return Err(EmbeddingError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(EmbeddingError::BadMagic { found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(EmbeddingError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(EmbeddingError::VersionMismatch(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(EmbeddingError::UnsupportedDtype(bytes[5]));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(EmbeddingError::ReservedNonZero);
    }
    let p = read_u32(bytes, 8) as usize;
    let d = read_u32(bytes, 12) as usize;
    let j = read_u32(bytes, 16) as usize;
    let payload_len = p
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or(EmbeddingError::TooLarge)?;
    let expected = HEADER_LEN + j + payload_len;
    if bytes.len() < expected {
        return Err(EmbeddingError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(EmbeddingError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let meta: KembMetadata = serde_json::from_slice(&bytes[HEADER_LEN..HEADER_LEN + j])
        .map_err(|err| EmbeddingError::Metadata(err.to_string()))?;
    let data: Vec<f32> = bytes[HEADER_LEN + j..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let patches = Array2::from_shape_vec((p, d), data).expect("payload length checked above");
    PatchEmbeddings::new(meta.image_id, meta.model_tag, patches)
}

pub fn write_embeddings(e: &PatchEmbeddings, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let bytes = encode(e)?;
    fs::write(path, bytes).map_err(|err| EmbeddingError::io(path, err))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<PatchEmbeddings, EmbeddingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|err| EmbeddingError::io(path, err))?;
    decode(&bytes)
}

/// An ordered set of images that is scored as one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSetManifest {
    pub set_id: String,
    pub image_ids: Vec<String>,
    #[serde(default)]
    pub notes: String,
}

impl ImageSetManifest {
    pub fn new(set_id: impl Into<String>, image_ids: Vec<String>) -> Self {
        ImageSetManifest {
            set_id: set_id.into(),
            image_ids,
            notes: String::new(),
        }
    }

    /// Rejects empty manifests and repeated image ids.
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.image_ids.is_empty() {
            return Err(EmbeddingError::EmptyManifest {
                set_id: self.set_id.clone(),
            });
        }
        let mut seen = HashSet::with_capacity(self.image_ids.len());
        for id in &self.image_ids {
            if !seen.insert(id.as_str()) {
                return Err(EmbeddingError::DuplicateImage {
                    set_id: self.set_id.clone(),
                    image_id: id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<ImageSetManifest, EmbeddingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|err| EmbeddingError::io(path, err))?;
    let manifest: ImageSetManifest =
        serde_json::from_str(&text).map_err(|err| EmbeddingError::ManifestParse {
            path: path.to_path_buf(),
            message: err.to_string(),
        })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &ImageSetManifest, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|err| EmbeddingError::io(path, err))
}

/// Loads every `*.json` manifest in a directory (sorted by file name), or a single file.
pub fn load_manifests(path: impl AsRef<Path>) -> Result<Vec<ImageSetManifest>, EmbeddingError> {
    let path = path.as_ref();
    if path.is_file() {
        return Ok(vec![load_manifest(path)?]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|err| EmbeddingError::io(path, err))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    files.iter().map(load_manifest).collect()
}

/// Source of per-image embeddings, keyed by image id.
pub trait EmbeddingStore: Sync {
    fn load(&self, image_id: &str) -> Result<Cow<'_, PatchEmbeddings>, EmbeddingError>;
}

impl EmbeddingStore for HashMap<String, PatchEmbeddings> {
    fn load(&self, image_id: &str) -> Result<Cow<'_, PatchEmbeddings>, EmbeddingError> {
        self.get(image_id)
            .map(Cow::Borrowed)
            .ok_or_else(|| EmbeddingError::MissingImage(image_id.to_string()))
    }
}

/// Directory of `<image_id>.kemb` files, read on demand.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, image_id: &str) -> PathBuf {
        self.root.join(format!("{image_id}.{KEMB_EXTENSION}"))
    }
}

impl EmbeddingStore for DirStore {
    fn load(&self, image_id: &str) -> Result<Cow<'_, PatchEmbeddings>, EmbeddingError> {
        let path = self.path_for(image_id);
        if !path.exists() {
            return Err(EmbeddingError::MissingImage(image_id.to_string()));
        }
        let e = read_embeddings(&path)?;
        if e.image_id() != image_id {
            return Err(EmbeddingError::Metadata(format!(
                "{} declares image_id {:?}",
                path.display(),
                e.image_id()
            )));
        }
        Ok(Cow::Owned(e))
    }
}

/// Origin of one stacked row: index into the manifest's image list and patch index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowOrigin {
    pub image: usize,
    pub patch: usize,
}

/// Pooled patch embeddings of one image set, shape `(sum P, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSet {
    pub set_id: String,
    pub image_ids: Vec<String>,
    pub model_tag: String,
    pub points: Array2<f32>,
    pub row_provenance: Vec<RowOrigin>,
}

impl StackedSet {
    pub fn n_images(&self) -> usize {
        self.image_ids.len()
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    /// `(image_id, patch_index)` of a stacked row.
    pub fn origin(&self, row: usize) -> (&str, usize) {
        let o = self.row_provenance[row];
        (&self.image_ids[o.image], o.patch)
    }
}

/// Stacks member embeddings in manifest order, then patch order.
pub fn stack_set<S: EmbeddingStore + ?Sized>(
    manifest: &ImageSetManifest,
    store: &S,
) -> Result<StackedSet, EmbeddingError> {
    manifest.validate()?;
    let members = manifest
        .image_ids
        .iter()
        .map(|id| store.load(id))
        .collect::<Result<Vec<_>, _>>()?;

    let first = &members[0];
    let dim = first.dim();
    let model_tag = first.model_tag().to_string();
    for m in &members[1..] {
        if m.dim() != dim {
            return Err(EmbeddingError::InconsistentDim {
                image_id: m.image_id().to_string(),
                expected: dim,
                found: m.dim(),
            });
        }
        if m.model_tag() != model_tag {
            return Err(EmbeddingError::InconsistentModel {
                image_id: m.image_id().to_string(),
                expected: model_tag.clone(),
                found: m.model_tag().to_string(),
            });
        }
    }

    let total: usize = members.iter().map(|m| m.n_patches()).sum();
    let mut points = Array2::<f32>::zeros((total, dim));
    let mut row_provenance = Vec::with_capacity(total);
    let mut row = 0;
    for (image, m) in members.iter().enumerate() {
        let p = m.n_patches();
        points
            .slice_mut(ndarray::s![row..row + p, ..])
            .assign(&m.patches());
        row_provenance.extend((0..p).map(|patch| RowOrigin { image, patch }));
        row += p;
    }

    Ok(StackedSet {
        set_id: manifest.set_id.clone(),
        image_ids: manifest.image_ids.clone(),
        model_tag,
        points,
        row_provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn emb(id: &str, p: usize, d: usize, offset: f32) -> PatchEmbeddings {
        let m = Array2::from_shape_fn((p, d), |(i, j)| offset + (i * d + j) as f32 * 0.5);
        PatchEmbeddings::new(id, "test", m).unwrap()
    }

    #[test]
    fn reference_size_file() {
        let m = Array2::<f32>::zeros((196, 1024));
        let e = PatchEmbeddings::new("a", REFERENCE_MODEL_TAG, m).unwrap();
        let bytes = encode(&e).unwrap();
        let meta_len = read_u32(&bytes, 16) as usize;
        assert_eq!(bytes.len(), HEADER_LEN + meta_len + 196 * 1024 * 4);
    }

    #[test]
    fn single_zero_payload() {
        let e = PatchEmbeddings::new("z", "test", array![[0.0f32]]).unwrap();
        let bytes = encode(&e).unwrap();
        let meta_len = read_u32(&bytes, 16) as usize;
        assert_eq!(&bytes[HEADER_LEN + meta_len..], &[0u8, 0, 0, 0]);
        assert_eq!(read_u32(&bytes, 8), 1);
        assert_eq!(read_u32(&bytes, 12), 1);
    }

    #[test]
    fn nan_rejected() {
        let err = PatchEmbeddings::new("n", "test", array![[0.0f32, f32::NAN]]).unwrap_err();
        assert!(matches!(err, EmbeddingError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn reference_tag_enforces_shape() {
        let err = PatchEmbeddings::new("r", REFERENCE_MODEL_TAG, Array2::zeros((197, 1024))).unwrap_err();
        assert!(matches!(err, EmbeddingError::ReferenceShape { .. }));
    }

    #[test]
    fn decode_errors_are_distinct() {
        let e = emb("a", 3, 4, 0.0);
        let good = encode(&e).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(EmbeddingError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode(&bad), Err(EmbeddingError::VersionMismatch(2))));

        let mut bad = good.clone();
        bad[5] = 2;
        assert!(matches!(decode(&bad), Err(EmbeddingError::UnsupportedDtype(2))));

        let short = &good[..good.len() - 1];
        assert!(matches!(decode(short), Err(EmbeddingError::Truncated { .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(EmbeddingError::SizeMismatch { .. })));

        assert!(matches!(decode(&good[..10]), Err(EmbeddingError::Truncated { .. })));
    }

    #[test]
    fn header_claims_reference_shape_but_short_payload() {
        let e = emb("a", 2, 2, 0.0);
        let mut bytes = encode(&e).unwrap();
        bytes[8..12].copy_from_slice(&196u32.to_le_bytes());
        bytes[12..16].copy_from_slice(&1024u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(EmbeddingError::Truncated { .. })));
    }

    #[test]
    fn stack_five_reference_images() {
        let store: HashMap<String, PatchEmbeddings> = (0..5)
            .map(|i| {
                let id = format!("img{i}");
                let e = PatchEmbeddings::new(&id, REFERENCE_MODEL_TAG, Array2::from_elem((196, 1024), i as f32)).unwrap();
                (id, e)
            })
            .collect();
        let manifest = ImageSetManifest::new("s", (0..5).map(|i| format!("img{i}")).collect());
        let stacked = stack_set(&manifest, &store).unwrap();
        assert_eq!(stacked.points.dim(), (980, 1024));
        assert_eq!(stacked.origin(196), ("img1", 0));
        assert_eq!(stacked.origin(979), ("img4", 195));
    }

    #[test]
    fn stack_single_image_is_identity() {
        let e = emb("only", 7, 3, 1.0);
        let store: HashMap<_, _> = [("only".to_string(), e.clone())].into();
        let stacked = stack_set(&ImageSetManifest::new("s", vec!["only".into()]), &store).unwrap();
        assert_eq!(stacked.points, e.patches().to_owned());
        assert!(stacked.row_provenance.iter().enumerate().all(|(i, o)| o.patch == i && o.image == 0));
    }

    #[test]
    fn stack_rejects_mixed_dims() {
        let store: HashMap<_, _> = [
            ("a".to_string(), emb("a", 2, 1024, 0.0)),
            ("b".to_string(), emb("b", 2, 512, 0.0)),
        ]
        .into();
        let err = stack_set(&ImageSetManifest::new("s", vec!["a".into(), "b".into()]), &store).unwrap_err();
        assert!(matches!(err, EmbeddingError::InconsistentDim { expected: 1024, found: 512, .. }));
    }

    #[test]
    fn stack_rejects_missing_and_duplicates() {
        let store: HashMap<_, _> = [("a".to_string(), emb("a", 2, 2, 0.0))].into();
        let err = stack_set(&ImageSetManifest::new("s", vec!["a".into(), "b".into()]), &store).unwrap_err();
        assert!(matches!(err, EmbeddingError::MissingImage(id) if id == "b"));
        let err = stack_set(&ImageSetManifest::new("s", vec!["a".into(), "a".into()]), &store).unwrap_err();
        assert!(matches!(err, EmbeddingError::DuplicateImage { .. }));
        let err = stack_set(&ImageSetManifest::new("s", vec![]), &store).unwrap_err();
        assert!(matches!(err, EmbeddingError::EmptyManifest { .. }));
    }

    #[test]
    fn stack_rejects_mixed_model_tags() {
        let a = emb("a", 2, 2, 0.0);
        let b = PatchEmbeddings::new("b", "other", Array2::zeros((2, 2))).unwrap();
        let store: HashMap<_, _> = [("a".to_string(), a), ("b".to_string(), b)].into();
        let err = stack_set(&ImageSetManifest::new("s", vec!["a".into(), "b".into()]), &store).unwrap_err();
        assert!(matches!(err, EmbeddingError::InconsistentModel { .. }));
    }
}
