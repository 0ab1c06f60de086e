//! Corpus manifest, stratified splits and the binary feature cache.
//!
//! Manifest format (UTF-8, tab separated):
//!
//! ```text
//! #classes<TAB>walk,run,sit
//! a01<TAB>0<TAB>frames/a01<TAB>30<TAB>audio/a01.wav
//! a02<TAB>1<TAB>frames/a02<TAB>30<TAB>-
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::list_frames;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub class_label: usize,
    pub frame_dir: PathBuf,
    pub frame_rate: f64,
    pub audio_path: Option<PathBuf>,
    pub duration_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub segments: Vec<SegmentRecord>,
    pub class_names: Vec<String>,
}

impl DatasetManifest {
    /// Validates ids, labels and class sizes.
    pub fn new(class_names: Vec<String>, segments: Vec<SegmentRecord>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let c = class_names.len();
        let mut seen = HashSet::new();
        for s in &segments {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            if s.class_label >= c {
                return Err(Error::LabelOutOfRange { id: s.id.clone(), label: s.class_label, classes: c });
            }
            if s.duration_frames < 2 {
                return Err(Error::invalid(format!("segment {:?} has fewer than 2 frames", s.id)));
            }
            if !(s.frame_rate > 0.0) {
                return Err(Error::invalid(format!("segment {:?} has non-positive frame rate", s.id)));
            }
        }
        let manifest = DatasetManifest { segments, class_names };
        for (class, count) in manifest.class_counts().into_iter().enumerate() {
            if count < 2 {
                return Err(Error::ClassTooSmall { class, count });
            }
        }
        Ok(manifest)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.segments {
            counts[s.class_label] += 1;
        }
        counts
    }

    pub fn segment(&self, id: &str) -> Option<&SegmentRecord> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn label_of(&self, id: &str) -> Option<usize> {
        self.segment(id).map(|s| s.class_label)
    }

    pub fn has_audio(&self) -> bool {
        self.segments.iter().any(|s| s.audio_path.is_some())
    }

    /// Serializes to the manifest text format. Paths are written as stored.
    pub fn to_text(&self) -> String {
        let mut out = format!("#classes\t{}\n", self.class_names.join(","));
        for s in &self.segments {
            let audio = s
                .audio_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                s.id,
                s.class_label,
                s.frame_dir.display(),
                s.frame_rate,
                audio
            ));
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

/// Parses manifest text, resolving relative paths against `base` and
/// counting frames in each frame directory.
pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::EmptyManifest)?;
    let names = header
        .strip_prefix("#classes\t")
        .ok_or(Error::ManifestFormat { line: 1, msg: "expected #classes header".into() })?;
    let class_names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
    if class_names.iter().any(String::is_empty) {
        return Err(Error::ManifestFormat { line: 1, msg: "empty class name".into() });
    }

    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };

    let mut segments = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let bad = |msg: &str| Error::ManifestFormat { line: lineno, msg: msg.to_string() };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        let class_label: usize = fields[1].trim().parse().map_err(|_| bad("bad label index"))?;
        let frame_rate: f64 = fields[3].trim().parse().map_err(|_| bad("bad frame rate"))?;
        let frame_dir = resolve(fields[2].trim());
        let audio_path = match fields[4].trim() {
            "-" | "" => None,
            p => Some(resolve(p)),
        };
        let duration_frames = list_frames(&frame_dir)?.len();
        segments.push(SegmentRecord {
            id: fields[0].trim().to_string(),
            class_label,
            frame_dir,
            frame_rate,
            audio_path,
            duration_frames,
        });
    }
    DatasetManifest::new(class_names, segments)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn is_test(&self, id: &str) -> bool {
        self.test_ids.iter().any(|t| t == id)
    }
}

/// Number of training segments for a class of size `n`.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1))
}

/// Per-class shuffle and cut; ids keep manifest order within each side.
pub fn stratified_split(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = HashSet::new();
    for class in 0..manifest.num_classes() {
        let mut ids: Vec<&str> = manifest
            .segments
            .iter()
            .filter(|s| s.class_label == class)
            .map(|s| s.id.as_str())
            .collect();
        if ids.len() < 2 {
            return Err(Error::ClassTooSmall { class, count: ids.len() });
        }
        ids.shuffle(&mut rng);
        let k = train_count(ids.len(), train_fraction);
        train.extend(ids[..k].iter().copied());
    }
    let (train_ids, test_ids): (Vec<_>, Vec<_>) = manifest
        .segments
        .iter()
        .map(|s| s.id.clone())
        .partition(|id| train.contains(id.as_str()));
    Ok(SplitPlan { train_ids, test_ids, seed })
}

const CACHE_MAGIC: &[u8; 4] = b"EGF1";

/// One named channel: a declared dimension and rows tagged by segment id.
///
/// Global descriptors store one row per segment. Set-valued descriptors
/// (Log-C windows, cuboid descriptors, MFCC frames) store one row per
/// element, repeating the segment id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Channel {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Channel {
    pub fn new(dim: usize) -> Self {
        Channel { dim, rows: Vec::new() }
    }

    pub fn push(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        self.rows.push((id.into(), v));
        Ok(())
    }

    /// First row for a segment.
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.iter().find(|(s, _)| s == id).map(|(_, v)| v.as_slice())
    }

    pub fn rows_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.rows.iter().filter(move |(s, _)| s == id).map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub channels: BTreeMap<String, Channel>,
}

impl FeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.get(name)
    }

    pub fn channel_mut(&mut self, name: &str, dim: usize) -> Result<&mut Channel> {
        let ch = self.channels.entry(name.to_string()).or_insert_with(|| Channel::new(dim));
        if ch.dim != dim {
            return Err(Error::DimensionMismatch { expected: ch.dim, got: dim });
        }
        Ok(ch)
    }

    pub fn insert(&mut self, name: &str, id: &str, v: Vec<f64>) -> Result<()> {
        let dim = v.len();
        self.channel_mut(name, dim)?.push(id, v)
    }

    /// Appends all channels of `other`; rows are concatenated per channel.
    pub fn merge(&mut self, other: FeatureTable) -> Result<()> {
        for (name, ch) in other.channels {
            let target = self.channel_mut(&name, ch.dim)?;
            target.rows.extend(ch.rows);
        }
        Ok(())
    }

    /// Checks that every row id belongs to the manifest.
    pub fn validate_ids(&self, manifest: &DatasetManifest) -> Result<()> {
        let ids: HashSet<&str> = manifest.segments.iter().map(|s| s.id.as_str()).collect();
        for (name, ch) in &self.channels {
            if name.starts_with("model:") {
                continue;
            }
            if let Some((id, _)) = ch.rows.iter().find(|(id, _)| !ids.contains(id.as_str())) {
                return Err(Error::invalid(format!("channel {name}: unknown segment {id:?}")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        for (name, ch) in &self.channels {
            put_str(&mut out, name);
            out.extend_from_slice(&(ch.dim as u32).to_le_bytes());
            out.extend_from_slice(&(ch.rows.len() as u32).to_le_bytes());
            for (id, _) in &ch.rows {
                put_str(&mut out, id);
            }
            for (_, v) in &ch.rows {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::CorruptCache("missing header".into()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != CACHE_MAGIC {
            if &magic[..3] == b"EGF" {
                return Err(Error::VersionMismatch(magic));
            }
            return Err(Error::CorruptCache("bad magic".into()));
        }
        let mut cur = Cursor { bytes, pos: 4 };
        let mut table = FeatureTable::new();
        while cur.pos < bytes.len() {
            let name = cur.string()?;
            let dim = cur.u32()? as usize;
            let count = cur.u32()? as usize;
            let ids = (0..count).map(|_| cur.string()).collect::<Result<Vec<_>>>()?;
            let mut ch = Channel::new(dim);
            for id in ids {
                let v = (0..dim).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
                ch.rows.push((id, v));
            }
            if table.channels.insert(name.clone(), ch).is_some() {
                return Err(Error::CorruptCache(format!("duplicate channel {name:?}")));
            }
        }
        Ok(table)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::CorruptCache("truncated file".into())),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptCache("invalid utf-8".into()))
    }
}

pub fn write_feature_table(table: &FeatureTable, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&table.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    FeatureTable::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(id: &str, label: usize) -> SegmentRecord {
        SegmentRecord {
            id: id.to_string(),
            class_label: label,
            frame_dir: PathBuf::from("."),
            frame_rate: 30.0,
            audio_path: None,
            duration_frames: 10,
        }
    }

    fn manifest(per_class: &[usize]) -> DatasetManifest {
        let names = (0..per_class.len()).map(|c| format!("c{c}")).collect();
        let mut segs = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                segs.push(seg(&format!("c{c}_{i:02}"), c));
            }
        }
        DatasetManifest::new(names, segs).unwrap()
    }

    fn write_frames(dir: &Path, n: usize) {
        fs::create_dir_all(dir).unwrap();
        for i in 0..n {
            let f = crate::frame::Frame::from_fn(4, 4, |x, y| (x + y + i) as f64);
            crate::frame::write_pgm(&dir.join(format!("{i:04}.pgm")), &f).unwrap();
        }
    }

    #[test]
    fn loads_84_segment_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(&dir.path().join("f"), 3);
        let mut text = String::from("#classes\ta,b,c,d,e,f,g\n");
        for c in 0..7 {
            for i in 0..12 {
                text.push_str(&format!("s{c}_{i}\t{c}\tf\t30\t-\n"));
            }
        }
        let p = dir.path().join("m.tsv");
        fs::write(&p, &text).unwrap();
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.num_classes(), 7);
        assert_eq!(m.segments.len(), 84);
        assert_eq!(m.segments[0].duration_frames, 3);
        assert_eq!(load_manifest(&p).unwrap(), m);
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(&dir.path().join("f"), 2);
        let empty = parse_manifest("#classes\ta,b\n", dir.path()).unwrap_err();
        assert_eq!(empty.to_string(), "empty manifest");
        let dup = "#classes\ta\na01\t0\tf\t30\t-\na01\t0\tf\t30\t-\n";
        let err = parse_manifest(dup, dir.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
        let range = "#classes\ta\na01\t1\tf\t30\t-\na02\t0\tf\t30\t-\n";
        assert!(matches!(parse_manifest(range, dir.path()), Err(Error::LabelOutOfRange { .. })));
        let missing = "#classes\ta\na01\t0\tnope\t30\t-\na02\t0\tf\t30\t-\n";
        assert!(matches!(parse_manifest(missing, dir.path()), Err(Error::FrameDir(_))));
    }

    #[test]
    fn split_sizes_match_protocol() {
        let m = manifest(&[12, 12, 12]);
        let plan = stratified_split(&m, 0.75, 7).unwrap();
        for c in 0..3 {
            let n_train = plan.train_ids.iter().filter(|id| m.label_of(id) == Some(c)).count();
            assert_eq!(n_train, 9);
        }
        assert_eq!(plan.test_ids.len(), 9);

        let m = manifest(&[10, 10]);
        let plan = stratified_split(&m, 0.75, 7).unwrap();
        assert_eq!(plan.train_ids.len(), 16);
        assert_eq!(plan.test_ids.len(), 4);
    }

    #[test]
    fn split_is_deterministic() {
        let m = manifest(&[12, 7, 5]);
        let a = stratified_split(&m, 0.75, 42).unwrap();
        let b = stratified_split(&m, 0.75, 42).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = stratified_split(&m, 0.75, 43).unwrap();
        assert_ne!(a.train_ids, c.train_ids);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let m = manifest(&[4, 4]);
        assert!(stratified_split(&m, 1.0, 0).is_err());
        assert!(stratified_split(&m, 0.0, 0).is_err());
    }

    #[test]
    fn cache_roundtrip_and_corruption() {
        let mut t = FeatureTable::new();
        for i in 0..3 {
            t.insert("GOFF", &format!("s{i}"), (0..137).map(|k| (k * i) as f64 * 0.1).collect()).unwrap();
        }
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"EGF1");
        assert_eq!(FeatureTable::from_bytes(&bytes).unwrap(), t);

        let err = FeatureTable::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().starts_with("corrupt cache"), "{err}");

        let mut v2 = bytes.clone();
        v2[3] = b'2';
        assert!(matches!(FeatureTable::from_bytes(&v2), Err(Error::VersionMismatch(_))));

        let empty = FeatureTable::new();
        assert_eq!(empty.to_bytes(), b"EGF1");
        assert_eq!(FeatureTable::from_bytes(b"EGF1").unwrap(), empty);
    }

    #[test]
    fn channel_rejects_wrong_dim() {
        let mut t = FeatureTable::new();
        t.insert("VIF", "a", vec![0.0; 106]).unwrap();
        assert!(matches!(t.insert("VIF", "b", vec![0.0; 105]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cache_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = FeatureTable::new();
        t.insert("Audio", "x", vec![1.5; 624]).unwrap();
        let p = dir.path().join("t.egf");
        write_feature_table(&t, &p).unwrap();
        assert_eq!(read_feature_table(&p).unwrap(), t);
    }

    proptest! {
        #[test]
        fn split_preserves_class_proportions(
            sizes in proptest::collection::vec(2usize..20, 1..6),
            frac in 0.1f64..0.9,
            seed in any::<u64>(),
        ) {
            let m = manifest(&sizes);
            let plan = stratified_split(&m, frac, seed).unwrap();
            prop_assert_eq!(plan.train_ids.len() + plan.test_ids.len(), m.segments.len());
            for (c, &n) in sizes.iter().enumerate() {
                let k = plan.train_ids.iter().filter(|id| m.label_of(id) == Some(c)).count();
                prop_assert!((k as f64 - frac * n as f64).abs() <= 1.0);
                prop_assert!(k >= 1 && k < n);
            }
        }

        #[test]
        fn cache_roundtrip_identity(
            rows in proptest::collection::vec(proptest::collection::vec(-1e300f64..1e300, 5), 0..8),
        ) {
            let mut t = FeatureTable::new();
            t.channel_mut("X", 5).unwrap();
            for (i, r) in rows.into_iter().enumerate() {
                t.insert("X", &format!("id{i}"), r).unwrap();
            }
            prop_assert_eq!(FeatureTable::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
