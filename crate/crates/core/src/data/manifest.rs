//! Dataset manifests: UTF-8 text, one `image<TAB>mask<TAB>split` entry per
//! line. Blank lines and `#` comments are ignored, except an optional
//! `# resolution: WIDTHxHEIGHT` line.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::write_atomic;

use super::{netpbm, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// (height, width) when declared.
    pub resolution: Option<(usize, usize)>,
    /// Directory relative entry paths are resolved against.
    pub root: PathBuf,
}

const RESOLUTION_TAG: &str = "# resolution:";

impl DatasetManifest {
    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut resolution = None;
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |message: String| Error::Manifest { line: line_no, message };
            let line = raw.trim_end_matches('\r');
            if let Some(rest) = line.strip_prefix(RESOLUTION_TAG) {
                resolution = Some(parse_resolution(rest.trim()).ok_or_else(|| {
                    bad(format!("bad resolution {:?}, expected WIDTHxHEIGHT", rest.trim()))
                })?);
                continue;
            }
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(bad("empty path".into()));
            }
            let split = match fields[2].trim() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(bad(format!("unknown split {other:?}"))),
            };
            for p in &fields[..2] {
                if !seen.insert(p.to_string()) {
                    return Err(bad(format!("duplicate path {p:?}")));
                }
            }
            entries.push(ManifestEntry { image: fields[0].into(), mask: fields[1].into(), split });
        }
        Ok(DatasetManifest { entries, resolution, root: root.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &root)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some((h, w)) = self.resolution {
            s.push_str(&format!("{RESOLUTION_TAG} {w}x{h}\n"));
        }
        for e in &self.entries {
            s.push_str(&format!("{}\t{}\t{}\n", e.image.display(), e.mask.display(), e.split));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Reads every entry of `split` in manifest order.
    pub fn load_samples(&self, split: Split) -> Result<Vec<Sample>> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let image = netpbm::read_ppm(&self.resolve(&e.image))?;
                let mask = netpbm::read_pgm(&self.resolve(&e.mask))?;
                let id = e.image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Sample::new(image, mask.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }), id)
            })
            .collect()
    }
}

fn parse_resolution(s: &str) -> Option<(usize, usize)> {
    let (w, h) = s.split_once('x')?;
    Some((h.trim().parse().ok()?, w.trim().parse().ok()?))
}

/// Number of training entries out of `n`: `ceil(fraction · n)`, kept within
/// `1..n` so both splits are non-empty.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    let raw = (train_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.clamp(1, n - 1)
}

/// Seeded shuffle of `0..n`; the first `train_count` shuffled positions are
/// train, the rest test. Returns the split of each position in order.
pub fn split_assignment(n: usize, train_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if n < 2 {
        return Err(Error::invalid(format!("splitting needs at least 2 entries, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_count(n, train_fraction);
    let mut out = vec![Split::Test; n];
    for &i in &order[..n_train] {
        out[i] = Split::Train;
    }
    Ok(out)
}

/// Tags the manifest's entries by `split_assignment`; entry order is kept.
pub fn split_dataset(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    let splits = split_assignment(manifest.entries.len(), train_fraction, seed)?;
    let mut out = manifest.clone();
    for (e, s) in out.entries.iter_mut().zip(splits) {
        e.split = s;
    }
    Ok(out)
}

/// The in-memory counterpart of `split_dataset`: (train, test) in input order.
pub fn split_samples(samples: Vec<Sample>, train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let splits = split_assignment(samples.len(), train_fraction, seed)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, split) in samples.into_iter().zip(splits) {
        match split {
            Split::Train => train.push(s),
            Split::Test => test.push(s),
        }
    }
    Ok((train, test))
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Writes `samples` as `images/<id>.ppm` and `masks/<id>.pgm` under `dir`
/// plus a split manifest, and returns the manifest. Every file is written
/// atomically, so a rerun with the same inputs leaves identical bytes.
pub fn write_dataset(samples: &[Sample], dir: &Path, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    let first = samples.first().ok_or(Error::Empty("dataset"))?;
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("masks"))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image = PathBuf::from("images").join(format!("{}.ppm", s.id));
        let mask = PathBuf::from("masks").join(format!("{}.pgm", s.id));
        netpbm::write_ppm(&dir.join(&image), &s.image)?;
        netpbm::write_pgm(&dir.join(&mask), &s.mask)?;
        entries.push(ManifestEntry { image, mask, split: Split::Train });
    }
    let all = DatasetManifest { entries, resolution: Some((first.height(), first.width())), root: dir.to_path_buf() };
    let manifest = split_dataset(&all, train_fraction, seed)?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest {
            entries: (0..n)
                .map(|i| ManifestEntry {
                    image: format!("img_{i}.ppm").into(),
                    mask: format!("mask_{i}.pgm").into(),
                    split: Split::Train,
                })
                .collect(),
            resolution: Some((120, 188)),
            root: PathBuf::new(),
        }
    }

    #[test]
    fn split_counts() {
        for (n, train) in [(348, 314), (10, 9), (200, 180), (2, 1)] {
            let m = split_dataset(&manifest(n), 0.9, 7).unwrap();
            assert_eq!(m.count(Split::Train), train, "n={n}");
            assert_eq!(m.count(Split::Test), n - train);
        }
    }

    #[test]
    fn split_is_seeded() {
        let a = split_dataset(&manifest(50), 0.9, 3).unwrap();
        let b = split_dataset(&manifest(50), 0.9, 3).unwrap();
        let c = split_dataset(&manifest(50), 0.9, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_needs_two_entries() {
        assert!(split_dataset(&manifest(1), 0.9, 0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = split_dataset(&manifest(5), 0.9, 1).unwrap();
        let back = DatasetManifest::parse(&m.to_text(), Path::new("")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let cases = [
            "a.ppm\ta.pgm\ttrain\nb.ppm\tb.pgm\n",
            "a.ppm\ta.pgm\ttrain\nb.ppm\tb.pgm\tvalidate\n",
            "a.ppm\ta.pgm\ttrain\na.ppm\tb.pgm\ttest\n",
            "# comment\na.ppm\ta.pgm\ttrain\n\t\ttest\n",
            "# resolution: 12by3\n",
        ];
        let lines = [2, 2, 2, 3, 1];
        for (text, line) in cases.iter().zip(lines) {
            match DatasetManifest::parse(text, Path::new("")) {
                Err(Error::Manifest { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("expected manifest error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn resolution_line() {
        let m = DatasetManifest::parse("# resolution: 188x120\n# other\n", Path::new("")).unwrap();
        assert_eq!(m.resolution, Some((120, 188)));
        assert!(m.entries.is_empty());
    }
}
