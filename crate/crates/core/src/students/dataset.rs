use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Irt,
    Arithmetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskPayload {
    /// Item-response question: correctness depends on the hidden difficulty only.
    Irt,
    /// `(a + b) mod V`, answered as a token sequence.
    Arithmetic { a: usize, b: usize, answer: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub features: Vec<f64>,
    /// Hidden latent difficulty. Never shown to the teacher directly.
    pub difficulty: f64,
    pub payload: TaskPayload,
}

impl Question {
    pub fn answer(&self) -> Option<&[usize]> {
        match &self.payload {
            TaskPayload::Arithmetic { answer, .. } => Some(answer),
            TaskPayload::Irt => None,
        }
    }
}

/// Generator settings. Questions are a pure function of `(seed, id)`.
///
/// For `irt`, feature 0 is a noisy standardized view of the difficulty,
/// `(d - mean + noise) / std` with `noise ~ N(0, feature_noise^2)`, and the
/// remaining `feature_dim - 1` features are standard-normal distractors. At the
/// default `feature_noise = 0.5` against `difficulty_std = 2.0` the difficulty
/// signal-to-noise ratio is 4:1 in standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub size: usize,
    pub validation_size: usize,
    pub seed: u64,
    pub feature_dim: usize,
    pub difficulty_mean: f64,
    pub difficulty_std: f64,
    pub feature_noise: f64,
    pub vocab_size: usize,
    pub sequence_length: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Irt,
            size: 10_000,
            validation_size: 500,
            seed: 1,
            feature_dim: 8,
            difficulty_mean: 0.0,
            difficulty_std: 3.0,
            feature_noise: 0.5,
            vocab_size: 10,
            sequence_length: 1,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: format!("dataset.{key}"), reason: reason.into() });
        if self.size == 0 {
            return bad("size", "must be >= 1");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be >= 1");
        }
        if !(self.difficulty_std > 0.0) {
            return bad("difficulty_std", "must be > 0");
        }
        if !(self.feature_noise >= 0.0) {
            return bad("feature_noise", "must be >= 0");
        }
        if self.kind == DatasetKind::Arithmetic && (self.vocab_size < 2 || self.sequence_length == 0) {
            return bad("vocab_size", "arithmetic needs vocab_size >= 2 and sequence_length >= 1");
        }
        Ok(())
    }

    /// Training questions, ids `0..size`.
    pub fn training(&self) -> Result<Vec<Question>> {
        self.generate_range(0, self.size)
    }

    /// Held-out questions, ids `size..size + validation_size`.
    pub fn validation(&self) -> Result<Vec<Question>> {
        self.generate_range(self.size as u64, self.validation_size)
    }

    pub fn generate_range(&self, first_id: u64, n: usize) -> Result<Vec<Question>> {
        self.validate()?;
        let projection = match self.kind {
            DatasetKind::Arithmetic => Some(self.projection()),
            DatasetKind::Irt => None,
        };
        Ok((first_id..first_id + n as u64)
            .map(|id| self.question(id, projection.as_deref()))
            .collect())
    }

    fn projection(&self) -> Vec<f64> {
        let cols = 2 * self.vocab_size;
        let mut r = rng::stream(self.seed, &[domain::PROJECTION]);
        let scale = 1.0 / (self.feature_dim as f64).sqrt();
        (0..self.feature_dim * cols)
            .map(|_| r.sample::<f64, _>(StandardNormal) * scale)
            .collect()
    }

    fn question(&self, id: u64, projection: Option<&[f64]>) -> Question {
        let mut r = rng::stream(self.seed, &[domain::DATASET, id]);
        match self.kind {
            DatasetKind::Irt => {
                let z: f64 = r.sample(StandardNormal);
                let difficulty = self.difficulty_mean + self.difficulty_std * z;
                let noise: f64 = r.sample::<f64, _>(StandardNormal) * self.feature_noise;
                let mut features = Vec::with_capacity(self.feature_dim);
                features.push((difficulty - self.difficulty_mean + noise) / self.difficulty_std);
                for _ in 1..self.feature_dim {
                    features.push(r.sample(StandardNormal));
                }
                Question {
                    id,
                    features,
                    difficulty,
                    payload: TaskPayload::Irt,
                }
            }
            DatasetKind::Arithmetic => {
                let v = self.vocab_size;
                let a = r.gen_range(0..v);
                let b = r.gen_range(0..v);
                let sum = (a + b) % v;
                let proj = projection.expect("projection is built for arithmetic datasets");
                let cols = 2 * v;
                let features = (0..self.feature_dim)
                    .map(|i| proj[i * cols + a] + proj[i * cols + v + b])
                    .collect();
                Question {
                    id,
                    features,
                    difficulty: if a + b >= v { 1.0 } else { 0.0 },
                    payload: TaskPayload::Arithmetic {
                        a,
                        b,
                        answer: vec![sum; self.sequence_length],
                    },
                }
            }
        }
    }
}

/// `n` questions of the given kind with ids `0..n`, default generator settings otherwise.
pub fn generate_dataset(kind: DatasetKind, n: usize, seed: u64) -> Result<Vec<Question>> {
    if n == 0 {
        return Err(Error::InvalidSize("dataset size must be >= 1".into()));
    }
    DatasetConfig {
        kind,
        size: n,
        seed,
        ..DatasetConfig::default()
    }
    .training()
}

/// One JSON record per line. Floats are written in shortest round-trip form.
pub fn write_dataset(path: &Path, questions: &[Question]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for q in questions {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Question>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(DatasetKind::Irt, 3, 7).unwrap();
        let b = generate_dataset(DatasetKind::Irt, 3, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = generate_dataset(DatasetKind::Irt, 3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn questions_depend_on_id_only() {
        let cfg = DatasetConfig::default();
        let all = cfg.generate_range(0, 20).unwrap();
        let tail = cfg.generate_range(10, 10).unwrap();
        assert_eq!(&all[10..], &tail[..]);
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(generate_dataset(DatasetKind::Irt, 0, 1), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn arithmetic_answers() {
        let qs = generate_dataset(DatasetKind::Arithmetic, 300, 3).unwrap();
        for q in &qs {
            let TaskPayload::Arithmetic { a, b, answer } = &q.payload else { panic!() };
            assert_eq!(answer, &vec![(a + b) % 10]);
        }
        let find = |x: usize, y: usize| {
            qs.iter()
                .find(|q| matches!(q.payload, TaskPayload::Arithmetic { a, b, .. } if a == x && b == y))
                .map(|q| q.answer().unwrap()[0])
        };
        assert_eq!(find(3, 4), Some(7));
        assert_eq!(find(7, 6), Some(3));
    }

    #[test]
    fn noiseless_feature_is_standardized_difficulty() {
        let cfg = DatasetConfig { feature_noise: 0.0, difficulty_mean: 1.0, ..DatasetConfig::default() };
        for q in cfg.generate_range(0, 50).unwrap() {
            assert!((q.features[0] - (q.difficulty - 1.0) / cfg.difficulty_std).abs() < 1e-12);
            assert_eq!(q.features.len(), 8);
        }
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let mut qs = generate_dataset(DatasetKind::Irt, 25, 11).unwrap();
        qs.extend(generate_dataset(DatasetKind::Arithmetic, 25, 11).unwrap());
        write_dataset(&path, &qs).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(qs.len(), back.len());
        for (a, b) in qs.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.difficulty.to_bits(), b.difficulty.to_bits());
            let fa: Vec<u64> = a.features.iter().map(|x| x.to_bits()).collect();
            let fb: Vec<u64> = b.features.iter().map(|x| x.to_bits()).collect();
            assert_eq!(fa, fb);
            assert_eq!(a.payload, b.payload);
        }
        write_dataset(&dir.path().join("again.jsonl"), &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("again.jsonl")).unwrap()
        );
    }
}
