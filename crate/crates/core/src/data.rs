//! Dataset loading, 2:1:1 splitting, standardization and mini-batch sampling.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Sample;
use crate::numeric::{SeededRng, Vector};

/// Column layout of a dataset CSV: `f1..fD,label`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub inputs: usize,
    pub classes: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    samples: Vec<Sample>,
    inputs: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        samples: Vec<Sample>,
        inputs: usize,
        classes: usize,
    ) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "dataset needs at least 4 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features().len() != inputs || s.target().len() != classes {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} does not match D = {inputs}, K = {classes}"
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            samples,
            inputs,
            classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn select<'a>(&'a self, indices: &'a [usize]) -> impl Iterator<Item = &'a Sample> + 'a {
        indices.iter().map(move |&i| &self.samples[i])
    }
}

/// Parses a dataset CSV with a header row, `D` numeric features and an
/// integer label in `0..K`.
pub fn load_csv_dataset(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, path, &name, schema)
}

fn parse_csv(text: &str, path: &Path, name: &str, schema: CsvSchema) -> Result<Dataset> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(0, "empty file".into()))?;
    if header.split(',').count() != schema.inputs + 1 {
        return Err(parse_err(
            1,
            format!("header has {} columns, expected {}", header.split(',').count(), schema.inputs + 1),
        ));
    }

    let mut samples = Vec::new();
    for (lineno, line) in lines {
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != schema.inputs + 1 {
            return Err(parse_err(
                row,
                format!("{} fields, expected {}", fields.len(), schema.inputs + 1),
            ));
        }
        let features = fields[..schema.inputs]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(row, format!("bad numeric field `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let raw_label = fields[schema.inputs];
        let label: i64 = raw_label
            .parse()
            .map_err(|_| parse_err(row, format!("bad label `{raw_label}`")))?;
        if label < 0 || label as usize >= schema.classes {
            return Err(Error::LabelOutOfRange {
                path: path.to_path_buf(),
                row,
                label,
                classes: schema.classes,
            });
        }
        samples.push(Sample::new(features.into(), label as usize, schema.classes)?);
    }
    if samples.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Dataset::new(name, samples, schema.inputs, schema.classes)
}

/// Key/value dataset description stored next to the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub inputs: usize,
    pub classes: usize,
    pub samples: usize,
    pub hidden_nodes_override: Option<usize>,
    pub csv: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let kv = parse_key_values(&text).map_err(Error::Config)?;
        let get = |key: &str| {
            kv.get(key)
                .ok_or_else(|| Error::Config(format!("{}: missing key `{key}`", path.display())))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Config(format!("{}: `{key}` is not a count", path.display())))
        };
        let hidden = match kv.get("hidden_nodes_override") {
            Some(v) => Some(v.parse().map_err(|_| {
                Error::Config(format!("{}: bad hidden_nodes_override", path.display()))
            })?),
            None => None,
        };
        Ok(Manifest {
            name: get("name")?.clone(),
            inputs: num("D")?,
            classes: num("K")?,
            samples: num("M")?,
            hidden_nodes_override: hidden,
            csv: path.with_extension("csv"),
        })
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let mut ds = load_csv_dataset(
            &self.csv,
            CsvSchema {
                inputs: self.inputs,
                classes: self.classes,
            },
        )?;
        if ds.len() != self.samples {
            return Err(Error::Config(format!(
                "{}: manifest says M = {}, file has {} rows",
                self.csv.display(),
                self.samples,
                ds.len()
            )));
        }
        ds.name = self.name.clone();
        Ok(ds)
    }
}

/// `key = value` lines; `#` starts a comment.
pub(crate) fn parse_key_values(text: &str) -> std::result::Result<HashMap<String, String>, String> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Feature-wise standardization with statistics taken from `stats_from` only.
///
/// Population variance is used. Zero-variance columns are centred but not
/// scaled.
pub fn standardize(ds: &Dataset, stats_from: &[usize]) -> Result<Dataset> {
    if stats_from.is_empty() {
        return Err(Error::InvalidArgument("standardize with no reference rows".into()));
    }
    let n = stats_from.len() as f64;
    let d = ds.inputs;
    let mut mean = vec![0.0; d];
    for &i in stats_from {
        for (m, v) in mean.iter_mut().zip(ds.samples[i].features()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for &i in stats_from {
        for ((s, v), m) in var.iter_mut().zip(ds.samples[i].features()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();

    let mut out = ds.clone();
    for s in &mut out.samples {
        let f = s.features_mut();
        for j in 0..d {
            f[j] = (f[j] - mean[j]) / scale[j];
        }
    }
    Ok(out)
}

/// Disjoint train/validation/test index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random 2:1:1 split; remainders go to the training set.
pub fn split_2_1_1(ds: &Dataset, rng: &mut SeededRng) -> Result<Split> {
    let m = ds.len();
    if m < 4 {
        return Err(Error::InvalidArgument(format!("cannot split {m} samples 2:1:1")));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut idx);
    let quarter = m / 4;
    let train_len = m - 2 * quarter;
    let test = idx.split_off(train_len + quarter);
    let validation = idx.split_off(train_len);
    Ok(Split {
        train: idx,
        validation,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// The whole pool every call.
    Full,
    /// Fixed seeded partition into blocks, cycled in order.
    Static,
    /// `batch_size` uniform draws with replacement per call.
    DynamicWithReplacement,
    /// Without replacement, reshuffling the pool once exhausted.
    DynamicEpochShuffle,
}

impl FromStr for BatchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" => Ok(BatchMode::Full),
            "static" => Ok(BatchMode::Static),
            "dynamic" | "replacement" | "dynamic-with-replacement" => {
                Ok(BatchMode::DynamicWithReplacement)
            }
            "epoch" | "shuffle" | "dynamic-epoch-shuffle" => Ok(BatchMode::DynamicEpochShuffle),
            other => Err(Error::InvalidArgument(format!("unknown batch mode `{other}`"))),
        }
    }
}

impl fmt::Display for BatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BatchMode::Full => "full",
            BatchMode::Static => "static",
            BatchMode::DynamicWithReplacement => "dynamic",
            BatchMode::DynamicEpochShuffle => "epoch",
        })
    }
}

/// A drawn mini-batch: dataset indices plus a running identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub id: u64,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BatchSampler {
    mode: BatchMode,
    batch_size: usize,
    pool: Vec<usize>,
    rng: SeededRng,
    blocks: Vec<Vec<usize>>,
    cursor: usize,
    draws: u64,
}

impl BatchSampler {
    /// Sampler over `pool`. In static mode the pool is partitioned into
    /// `max(1, pool / batch_size)` blocks of near-equal size.
    pub fn new(mode: BatchMode, batch_size: usize, pool: Vec<usize>, mut rng: SeededRng) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InvalidArgument("empty sampling pool".into()));
        }
        if mode != BatchMode::Full && batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if matches!(mode, BatchMode::Static | BatchMode::DynamicEpochShuffle)
            && batch_size > pool.len()
        {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} exceeds pool of {}",
                pool.len()
            )));
        }
        let mut pool = pool;
        let mut blocks = Vec::new();
        match mode {
            BatchMode::Static => {
                let n_blocks = (pool.len() / batch_size).max(1);
                rng.shuffle(&mut pool);
                blocks = partition(&pool, n_blocks);
            }
            BatchMode::DynamicEpochShuffle => rng.shuffle(&mut pool),
            _ => {}
        }
        Ok(BatchSampler {
            mode,
            batch_size,
            pool,
            rng,
            blocks,
            cursor: 0,
            draws: 0,
        })
    }

    /// Static sampler with an explicit block count.
    pub fn with_blocks(pool: Vec<usize>, blocks: usize, mut rng: SeededRng) -> Result<Self> {
        if blocks == 0 || blocks > pool.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} indices into {blocks} blocks",
                pool.len()
            )));
        }
        let mut pool = pool;
        rng.shuffle(&mut pool);
        let parts = partition(&pool, blocks);
        Ok(BatchSampler {
            mode: BatchMode::Static,
            batch_size: parts[0].len(),
            pool,
            rng,
            blocks: parts,
            cursor: 0,
            draws: 0,
        })
    }

    pub fn mode(&self) -> BatchMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        match self.mode {
            BatchMode::Full => self.pool.len(),
            _ => self.batch_size,
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of batches drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_batch(&mut self) -> Batch {
        let id = self.draws;
        self.draws += 1;
        let indices = match self.mode {
            BatchMode::Full => self.pool.clone(),
            BatchMode::Static => self.blocks[id as usize % self.blocks.len()].clone(),
            BatchMode::DynamicWithReplacement => (0..self.batch_size)
                .map(|_| self.pool[self.rng.index(self.pool.len())])
                .collect(),
            BatchMode::DynamicEpochShuffle => {
                let mut out = Vec::with_capacity(self.batch_size);
                while out.len() < self.batch_size {
                    if self.cursor == self.pool.len() {
                        self.rng.shuffle(&mut self.pool);
                        self.cursor = 0;
                    }
                    let take = (self.batch_size - out.len()).min(self.pool.len() - self.cursor);
                    out.extend_from_slice(&self.pool[self.cursor..self.cursor + take]);
                    self.cursor += take;
                }
                out
            }
        };
        Batch { id, indices }
    }
}

fn partition(items: &[usize], n: usize) -> Vec<Vec<usize>> {
    let base = items.len() / n;
    let extra = items.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for b in 0..n {
        let len = base + usize::from(b < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Mean of each feature column over `rows`. Used by tests and diagnostics.
pub fn column_means(ds: &Dataset, rows: &[usize]) -> Vector {
    let mut mean = Vector::zeros(ds.inputs);
    for &i in rows {
        mean.axpy(1.0, ds.samples[i].features());
    }
    mean.scaled(1.0 / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy(m: usize) -> Dataset {
        let samples = (0..m)
            .map(|i| Sample::new(vec![i as f64, 3.0].into(), i % 2, 2).unwrap())
            .collect();
        Dataset::new("toy", samples, 2, 2).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_errors() {
        let schema = CsvSchema { inputs: 2, classes: 3 };
        let empty = write_tmp("");
        assert!(matches!(load_csv_dataset(empty.path(), schema), Err(Error::Parse { .. })));

        let out_of_range = write_tmp("f1,f2,label\n1,2,0\n1,2,1\n3,4,3\n5,6,2\n");
        match load_csv_dataset(out_of_range.path(), schema) {
            Err(Error::LabelOutOfRange { row, label, .. }) => {
                assert_eq!(row, 4);
                assert_eq!(label, 3);
            }
            other => panic!("unexpected {other:?}"),
        }

        let malformed = write_tmp("f1,f2,label\n1,2,0\n1,x,1\n");
        match load_csv_dataset(malformed.path(), schema) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_one_hot_and_order() {
        let f = write_tmp("f1,f2,label\n1,2,0\n3,4,2\n5,6,1\n7,8,0\n");
        let ds = load_csv_dataset(f.path(), CsvSchema { inputs: 2, classes: 3 }).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.samples()[1].target().as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(ds.samples()[2].features().as_slice(), &[5.0, 6.0]);
    }

    #[test]
    fn standardize_examples() {
        let ds = toy(10);
        let train: Vec<usize> = (0..6).collect();
        let st = standardize(&ds, &train).unwrap();
        // constant column goes to exactly zero
        assert!(st.samples().iter().all(|s| s.features()[1] == 0.0));
        assert!(column_means(&st, &train)[0].abs() < 1e-10);

        let two = Dataset::new(
            "two",
            [0.0, 2.0, 5.0, 9.0]
                .iter()
                .map(|&v| Sample::new(vec![v].into(), 0, 1).unwrap())
                .collect(),
            1,
            1,
        )
        .unwrap();
        let st = standardize(&two, &[0, 1]).unwrap();
        assert_eq!(st.samples()[0].features()[0], -1.0);
        assert_eq!(st.samples()[1].features()[0], 1.0);
        assert!(standardize(&two, &[]).is_err());
    }

    #[test]
    fn standardize_ignores_other_rows() {
        let ds = toy(12);
        let train = vec![0, 2, 4, 6];
        let a = standardize(&ds, &train).unwrap();
        let mut perturbed = ds.clone();
        perturbed.samples[11].features_mut()[0] = 1e6;
        let b = standardize(&perturbed, &train).unwrap();
        for &i in &train {
            assert_eq!(a.samples()[i], b.samples()[i]);
        }
    }

    #[test]
    fn split_sizes() {
        let s = split_2_1_1(&toy(8), &mut SeededRng::new(1)).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (4, 2, 2));
        let s = split_2_1_1(&toy(150), &mut SeededRng::new(1)).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (76, 37, 37));
        let again = split_2_1_1(&toy(150), &mut SeededRng::new(1)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn full_and_static_modes() {
        let pool: Vec<usize> = (0..76).collect();
        let mut full = BatchSampler::new(BatchMode::Full, 32, pool.clone(), SeededRng::new(0)).unwrap();
        for _ in 0..3 {
            assert_eq!(full.next_batch().indices, pool);
        }

        let mut st = BatchSampler::with_blocks(pool.clone(), 4, SeededRng::new(0)).unwrap();
        let blocks = st.blocks().to_vec();
        assert_eq!(blocks.len(), 4);
        for call in 0..8 {
            assert_eq!(st.next_batch().indices, blocks[call % 4]);
        }
        let mut all: Vec<usize> = blocks.concat();
        all.sort_unstable();
        assert_eq!(all, pool);
    }

    #[test]
    fn epoch_mode_covers_pool_once_per_epoch() {
        let pool: Vec<usize> = (100..130).collect();
        let mut s =
            BatchSampler::new(BatchMode::DynamicEpochShuffle, 7, pool.clone(), SeededRng::new(3)).unwrap();
        let stream: Vec<usize> = (0..30).flat_map(|_| s.next_batch().indices).collect();
        for epoch in stream.chunks(pool.len()).filter(|c| c.len() == pool.len()) {
            let mut e = epoch.to_vec();
            e.sort_unstable();
            assert_eq!(e, pool);
        }
        assert!(BatchSampler::new(BatchMode::DynamicEpochShuffle, 31, pool, SeededRng::new(3)).is_err());
    }

    #[test]
    fn with_replacement_is_uniform() {
        let pool: Vec<usize> = (0..76).collect();
        let mut s =
            BatchSampler::new(BatchMode::DynamicWithReplacement, 32, pool.clone(), SeededRng::new(11))
                .unwrap();
        let mut counts = vec![0u64; 76];
        let calls = 100_000;
        for _ in 0..calls {
            let b = s.next_batch();
            assert_eq!(b.indices.len(), 32);
            for i in b.indices {
                counts[i] += 1;
            }
        }
        let n = (calls * 32) as f64;
        let p = 1.0 / 76.0;
        let expected = n * p;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square with 75 dof: mean 75, sd sqrt(150)
        let dof: f64 = 75.0;
        assert!(chi2 < dof + 3.0 * (2.0 * dof).sqrt(), "chi2 = {chi2}");
        // per-index 4 sigma guard against a single gross outlier
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - expected).abs() < 4.0 * sd));
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("name = Iris\n# comment\nD=4\n").unwrap();
        assert_eq!(kv["name"], "Iris");
        assert_eq!(kv["D"], "4");
        assert!(parse_key_values("garbage").is_err());
    }
}
