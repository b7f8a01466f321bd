//! Grayscale/binary image rasters, PGM file I/O, and dataset-directory loading.
//!
//! PGM is the only raster format: it is header-trivial and bit-exact, so a
//! corpus can be regenerated and diffed byte for byte. The writer always emits
//! the canonical binary form (`P5`, maxval 255); the reader additionally
//! accepts the ASCII form (`P2`) and any maxval up to 255.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Row-major 8-bit grayscale image. 0 is black ink, 255 is white paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Panics if `width` or `height` is zero or `pixels.len() != width * height`.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(pixels.len(), width * height, "pixel buffer/shape mismatch");
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }
}

/// Row-major binary mask; `true` marks foreground (ink) pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    /// Panics if `width` or `height` is zero or `mask.len() != width * height`.
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(mask.len(), width * height, "mask buffer/shape mismatch");
        Self { width, height, mask }
    }

    /// All-background image of the given shape.
    pub fn blank(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.mask[y * self.width + x] = value;
    }

    /// Number of foreground pixels.
    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// One named class of a labeled dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassInfo {
    pub id: usize,
    pub name: String,
}

/// One labeled sample image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub class_id: usize,
    pub sample_id: String,
    pub image: GrayImage,
}

/// A loaded dataset: class list plus all sample images in deterministic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub classes: Vec<ClassInfo>,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("unknown magic at byte {offset}: expected \"P5\" or \"P2\"")]
    UnknownMagic { offset: usize },
    #[error("malformed header at byte {offset}: {what}")]
    MalformedHeader { offset: usize, what: String },
    #[error("maxval {maxval} at byte {offset} exceeds 255")]
    MaxvalTooLarge { maxval: u32, offset: usize },
    #[error("truncated pixel payload at byte {offset}: expected {expected} samples, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid sample value at byte {offset}: {what}")]
    BadSample { offset: usize, what: String },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing classes.tsv in {0}")]
    MissingClassesFile(PathBuf),
    #[error("{path}: {what}")]
    BadClassesFile { path: PathBuf, what: String },
    #[error("class directory {0} has no entry in classes.tsv")]
    UnlistedClassDir(PathBuf),
    #[error("{path}: {source}")]
    Pgm { path: PathBuf, source: PgmError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Cursor over the raw bytes of a PGM file. Comments (`#` to end of line) are
/// treated as whitespace.
struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    /// Next whitespace-delimited token, or None at end of input.
    fn token(&mut self) -> Option<(usize, &'a [u8])> {
        self.skip_space_and_comments();
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        Some((start, &self.bytes[start..self.pos]))
    }

    fn header_uint(&mut self, what: &str) -> Result<(usize, u32), PgmError> {
        let end = self.bytes.len();
        let (offset, tok) = self.token().ok_or_else(|| PgmError::MalformedHeader {
            offset: end,
            what: format!("missing {what}"),
        })?;
        let text = std::str::from_utf8(tok).map_err(|_| PgmError::MalformedHeader {
            offset,
            what: format!("non-ASCII {what}"),
        })?;
        let value: u32 = text.parse().map_err(|_| PgmError::MalformedHeader {
            offset,
            what: format!("{what} is not an unsigned integer: {text:?}"),
        })?;
        Ok((offset, value))
    }
}

/// Parses a PGM file (binary `P5` or ASCII `P2`, maxval <= 255).
///
/// Pixels with maxval below 255 are rescaled to the full 0..=255 range by
/// `round(p * 255 / maxval)`.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 {
        return Err(PgmError::UnknownMagic { offset: 0 });
    }
    let magic = &bytes[..2];
    if magic != b"P5" && magic != b"P2" {
        return Err(PgmError::UnknownMagic { offset: 0 });
    }

    let mut cursor = PgmCursor::new(&bytes[2..]);
    let (w_off, width) = cursor.header_uint("width")?;
    let (h_off, height) = cursor.header_uint("height")?;
    let (m_off, maxval) = cursor.header_uint("maxval")?;
    if width == 0 {
        return Err(PgmError::MalformedHeader {
            offset: w_off + 2,
            what: "width must be >= 1".into(),
        });
    }
    if height == 0 {
        return Err(PgmError::MalformedHeader {
            offset: h_off + 2,
            what: "height must be >= 1".into(),
        });
    }
    if maxval > 255 {
        return Err(PgmError::MaxvalTooLarge {
            maxval,
            offset: m_off + 2,
        });
    }
    if maxval == 0 {
        return Err(PgmError::MalformedHeader {
            offset: m_off + 2,
            what: "maxval must be >= 1".into(),
        });
    }

    let expected = width as usize * height as usize;
    let samples = if magic == b"P5" {
        // A single whitespace byte separates the header from the raster.
        if cursor.pos >= cursor.bytes.len() || !cursor.bytes[cursor.pos].is_ascii_whitespace() {
            return Err(PgmError::MalformedHeader {
                offset: cursor.pos + 2,
                what: "expected whitespace before binary raster".into(),
            });
        }
        let payload = &cursor.bytes[cursor.pos + 1..];
        if payload.len() < expected {
            return Err(PgmError::TruncatedPayload {
                offset: bytes.len(),
                expected,
                found: payload.len(),
            });
        }
        payload[..expected].to_vec()
    } else {
        let mut values = Vec::with_capacity(expected);
        while values.len() < expected {
            let Some((offset, tok)) = cursor.token() else {
                return Err(PgmError::TruncatedPayload {
                    offset: bytes.len(),
                    expected,
                    found: values.len(),
                });
            };
            let text = std::str::from_utf8(tok).unwrap_or("");
            let value: u32 = text.parse().map_err(|_| PgmError::BadSample {
                offset: offset + 2,
                what: format!("not an unsigned integer: {text:?}"),
            })?;
            if value > maxval {
                return Err(PgmError::BadSample {
                    offset: offset + 2,
                    what: format!("sample {value} exceeds maxval {maxval}"),
                });
            }
            values.push(value as u8);
        }
        values
    };

    let pixels = if maxval == 255 {
        samples
    } else {
        samples
            .iter()
            .map(|&p| {
                let p = u32::from(p).min(maxval);
                ((p * 255 + maxval / 2) / maxval) as u8
            })
            .collect()
    };

    Ok(GrayImage::new(width as usize, height as usize, pixels))
}

/// Encodes the canonical binary form: `P5\n<w> <h>\n255\n` then the raster.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

fn parse_classes_tsv(path: &Path) -> Result<Vec<ClassInfo>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut classes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: String| DatasetError::BadClassesFile {
            path: path.to_path_buf(),
            what: format!("line {}: {what}", lineno + 1),
        };
        let (id_text, name) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected <id>\\t<name>".into()))?;
        let id: usize = id_text
            .parse()
            .map_err(|_| bad(format!("class id is not an unsigned integer: {id_text:?}")))?;
        classes.push(ClassInfo {
            id,
            name: name.to_string(),
        });
    }
    classes.sort_by_key(|c| c.id);
    for (index, class) in classes.iter().enumerate() {
        if class.id != index {
            return Err(DatasetError::BadClassesFile {
                path: path.to_path_buf(),
                what: format!("class ids must be contiguous 0..N-1, found {}", class.id),
            });
        }
    }
    Ok(classes)
}

/// Loads a dataset directory: `classes.tsv` plus one `class_<id>/` directory
/// of `.pgm` files per class.
///
/// Classes are ordered by id and samples by (class id, filename); two loads of
/// the same tree therefore produce identical datasets. A listed class without
/// a directory (or with an empty one) simply contributes no samples.
pub fn load_dataset(root: &Path) -> Result<RawDataset, DatasetError> {
    let classes_path = root.join("classes.tsv");
    if !classes_path.is_file() {
        return Err(DatasetError::MissingClassesFile(root.to_path_buf()));
    }
    let classes = parse_classes_tsv(&classes_path)?;

    // Reject class directories that classes.tsv does not mention.
    let entries = fs::read_dir(root).map_err(|source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        let name = entry.file_name();
        let Some(id_text) = name.to_string_lossy().strip_prefix("class_").map(String::from) else {
            continue;
        };
        if !entry.path().is_dir() {
            continue;
        }
        match id_text.parse::<usize>() {
            Ok(id) if id < classes.len() => {}
            _ => return Err(DatasetError::UnlistedClassDir(entry.path())),
        }
    }

    let mut samples = Vec::new();
    for class in &classes {
        let dir = root.join(format!("class_{}", class.id));
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|source| DatasetError::Io {
                path: dir.clone(),
                source,
            })?
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| DatasetError::Io {
                path: dir.clone(),
                source,
            })?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "pgm").unwrap_or(false))
            .collect();
        files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));

        for path in files {
            let bytes = fs::read(&path).map_err(|source| DatasetError::Io {
                path: path.clone(),
                source,
            })?;
            let image = read_pgm(&bytes).map_err(|source| DatasetError::Pgm {
                path: path.clone(),
                source,
            })?;
            let sample_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            samples.push(Sample {
                class_id: class.id,
                sample_id,
                image,
            });
        }
    }

    Ok(RawDataset { classes, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    /// Test-only ASCII (P2) encoder; an independent route to the same pixels.
    fn encode_p2(img: &GrayImage) -> Vec<u8> {
        let mut out = format!("P2\n{} {}\n255\n", img.width(), img.height());
        for row in img.pixels().chunks(img.width()) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.into_bytes()
    }

    #[test]
    fn reads_binary_pgm() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!(img, GrayImage::new(2, 1, vec![0, 255]));
    }

    #[test]
    fn reads_ascii_pgm() {
        let img = read_pgm(b"P2\n1 1\n255\n128\n").unwrap();
        assert_eq!(img, GrayImage::new(1, 1, vec![128]));
    }

    #[test]
    fn truncated_payload_is_reported_with_counts() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        match read_pgm(&bytes) {
            Err(PgmError::TruncatedPayload { expected, found, .. }) => {
                assert_eq!(expected, 4);
                assert_eq!(found, 3);
            }
            other => panic!("expected truncated-payload error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_magic() {
        assert_eq!(
            read_pgm(b"P6\n1 1\n255\n_"),
            Err(PgmError::UnknownMagic { offset: 0 })
        );
        assert_eq!(read_pgm(b""), Err(PgmError::UnknownMagic { offset: 0 }));
    }

    #[test]
    fn rejects_maxval_above_255() {
        match read_pgm(b"P2\n1 1\n65535\n1\n") {
            Err(PgmError::MaxvalTooLarge { maxval, .. }) => assert_eq!(maxval, 65535),
            other => panic!("expected maxval error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_header() {
        assert!(matches!(
            read_pgm(b"P5\nx 1\n255\n_"),
            Err(PgmError::MalformedHeader { .. })
        ));
        assert!(matches!(
            read_pgm(b"P5\n2 1\n"),
            Err(PgmError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1 # shape\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[7, 9]);
    }

    #[test]
    fn sub_255_maxval_is_rescaled() {
        // round(50 * 255 / 100) = round(127.5) = 128, half-up.
        let img = read_pgm(b"P2\n2 1\n100\n50 100\n").unwrap();
        assert_eq!(img.pixels(), &[128, 255]);
    }

    #[test]
    fn writes_canonical_form() {
        let bytes = write_pgm(&GrayImage::new(1, 1, vec![0]));
        assert_eq!(bytes, b"P5\n1 1\n255\n\0".to_vec());
    }

    #[test]
    fn canonical_encoding_of_2x1_is_13_bytes() {
        // Counted from the canonical form: 11 header bytes plus 2 payload bytes.
        let bytes = write_pgm(&GrayImage::new(2, 1, vec![0, 255]));
        assert_eq!(bytes.len(), 13);
        assert_eq!(&bytes[..11], b"P5\n2 1\n255\n");
    }

    proptest! {
        #[test]
        fn pgm_round_trip((w, h) in (1usize..24, 1usize..24), seed in any::<u64>()) {
            let mut state = seed;
            let pixels: Vec<u8> = (0..w * h)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    (state & 0xFF) as u8
                })
                .collect();
            let img = GrayImage::new(w, h, pixels);
            prop_assert_eq!(read_pgm(&write_pgm(&img)).unwrap(), img);
        }

        #[test]
        fn p2_and_p5_parse_identically((w, h) in (1usize..16, 1usize..16), seed in any::<u64>()) {
            let mut state = seed;
            let pixels: Vec<u8> = (0..w * h)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    (state & 0xFF) as u8
                })
                .collect();
            let img = GrayImage::new(w, h, pixels);
            prop_assert_eq!(read_pgm(&encode_p2(&img)).unwrap(), img);
        }
    }

    fn write_tree(root: &Path, classes: &[(usize, &str)], files: &[(usize, &str, GrayImage)]) {
        let mut tsv = String::new();
        for (id, name) in classes {
            tsv.push_str(&format!("{id}\t{name}\n"));
        }
        fs::write(root.join("classes.tsv"), tsv).unwrap();
        for (id, _) in classes {
            fs::create_dir_all(root.join(format!("class_{id}"))).unwrap();
        }
        for (id, name, img) in files {
            let path = root.join(format!("class_{id}")).join(format!("{name}.pgm"));
            fs::write(path, write_pgm(img)).unwrap();
        }
    }

    #[test]
    fn loads_samples_in_deterministic_order() {
        let dir = tempfile::tempdir().unwrap();
        let px = GrayImage::new(1, 1, vec![9]);
        write_tree(
            dir.path(),
            &[(0, "alef"), (1, "be")],
            &[
                (1, "b2", px.clone()),
                (0, "a1", px.clone()),
                (1, "b1", px.clone()),
                (0, "a3", px.clone()),
                (0, "a2", px.clone()),
                (1, "b3", px.clone()),
            ],
        );
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.classes.len(), 2);
        assert_eq!(ds.samples.len(), 6);
        let order: Vec<(usize, &str)> = ds
            .samples
            .iter()
            .map(|s| (s.class_id, s.sample_id.as_str()))
            .collect();
        assert_eq!(
            order,
            vec![(0, "a1"), (0, "a2"), (0, "a3"), (1, "b1"), (1, "b2"), (1, "b3")]
        );

        let again = load_dataset(dir.path()).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn empty_class_directory_is_permitted() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), &[(0, "only")], &[]);
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.classes.len(), 1);
        assert!(ds.samples.is_empty());
    }

    #[test]
    fn missing_classes_tsv_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DatasetError::MissingClassesFile(_))
        ));
    }

    #[test]
    fn unlisted_class_directory_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), &[(0, "only")], &[]);
        fs::create_dir(dir.path().join("class_7")).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DatasetError::UnlistedClassDir(_))
        ));
    }

    #[test]
    fn unreadable_pgm_is_fatal_with_path() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), &[(0, "only")], &[]);
        let bad = dir.path().join("class_0").join("broken.pgm");
        fs::write(&bad, b"not a pgm").unwrap();
        match load_dataset(dir.path()) {
            Err(DatasetError::Pgm { path, .. }) => assert_eq!(path, bad),
            other => panic!("expected pgm error, got {other:?}"),
        }
    }

    #[test]
    fn non_contiguous_class_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("classes.tsv"), "0\ta\n2\tb\n").unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DatasetError::BadClassesFile { .. })
        ));
    }
}
