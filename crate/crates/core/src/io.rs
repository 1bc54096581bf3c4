//! On-disk formats: JSON-Lines datasets and single-document JSON models.
//! Both carry a format tag and version and are rejected when either is
//! unknown.

use std::hash::Hasher;
use std::io::{BufRead, Write};

use fnv::FnvHasher;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::choice::{ChoiceMask, ChoiceTask, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::net::{Architecture, BatchNorm, HiddenLayer, Linear, NetworkParams};
use crate::training::TrainConfig;

pub const DATASET_FORMAT: &str = "pareto-choice/dataset";
pub const MODEL_FORMAT: &str = "pareto-choice/model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    problem: String,
    seed: u64,
    m: usize,
    d: usize,
    #[serde(default, skip_deserializing)]
    stats: Option<TaskStats>,
}

/// Summary of the labels, written for inspection and ignored on read.
#[derive(Debug, Serialize, Deserialize)]
struct TaskStats {
    n_tasks: usize,
    positive_rate: f64,
    all_chosen_tasks: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskLine {
    task_id: String,
    features: Vec<Vec<f64>>,
    choice: Vec<u8>,
}

fn check_format(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!(
            "expected format '{expected}', found '{format}'"
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported {expected} version {version} (this build reads version {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

/// Writes the header line and one line per task.
pub fn write_dataset<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    let meta = data.meta();
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        version: FORMAT_VERSION,
        problem: meta.problem.clone(),
        seed: meta.seed,
        m: meta.task_size,
        d: meta.feature_dim,
        stats: Some(TaskStats {
            n_tasks: data.len(),
            positive_rate: data.positive_rate(),
            all_chosen_tasks: data.all_chosen_tasks(),
        }),
    };
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    for (task, choice) in data.iter() {
        let line = TaskLine {
            task_id: task.id().to_string(),
            features: task.features().outer_iter().map(|r| r.to_vec()).collect(),
            choice: choice.to_bits(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]; errors name the 1-based line.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected a header line".into()))??;
    let header: DatasetHeader =
        serde_json::from_str(&first).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    check_format(&header.format, header.version, DATASET_FORMAT)?;

    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TaskLine = serde_json::from_str(&line).map_err(|e| parse_err(n, e.to_string()))?;
        let rows = rec.features.len();
        if rows != header.m || rec.choice.len() != header.m {
            return Err(parse_err(
                n,
                format!(
                    "expected {} objects, found {} feature rows and {} choice bits",
                    header.m,
                    rows,
                    rec.choice.len()
                ),
            ));
        }
        if rec.features.iter().any(|r| r.len() != header.d) {
            return Err(parse_err(
                n,
                format!("every feature row must have {} entries", header.d),
            ));
        }
        let flat: Vec<f64> = rec.features.into_iter().flatten().collect();
        let features = Array2::from_shape_vec((rows, header.d), flat)
            .map_err(|e| parse_err(n, e.to_string()))?;
        let task =
            ChoiceTask::new(rec.task_id, features).map_err(|e| parse_err(n, e.to_string()))?;
        let mask = ChoiceMask::from_bits(&rec.choice).map_err(|e| parse_err(n, e.to_string()))?;
        pairs.push((task, mask));
    }
    let meta = DatasetMeta {
        problem: header.problem,
        seed: header.seed,
        task_size: header.m,
        feature_dim: header.d,
    };
    Dataset::new(pairs, meta)
}

struct HashWriter(FnvHasher);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// 64-bit FNV-1a hash of the dataset's canonical serialization.
pub fn dataset_fingerprint(data: &Dataset) -> u64 {
    let mut h = HashWriter(FnvHasher::default());
    write_dataset(data, &mut h).expect("hashing never fails");
    h.0.finish()
}

/// Fingerprint as fixed-width lowercase hex.
pub fn fingerprint_hex(fingerprint: u64) -> String {
    format!("{fingerprint:016x}")
}

/// A named row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn vector(name: String, v: &Array1<f64>) -> Self {
        Tensor {
            name,
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    fn matrix(name: String, m: &Array2<f64>) -> Self {
        Tensor {
            name,
            shape: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }
}

/// Serialized form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub architecture: Architecture,
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
    pub dataset_fingerprint: Option<String>,
    pub tensors: Vec<Tensor>,
}

impl ModelFile {
    pub fn from_params(
        params: &NetworkParams,
        train_config: Option<TrainConfig>,
        seed: u64,
        dataset_fingerprint: Option<u64>,
    ) -> Self {
        let mut norm = crate::net::NormConfig {
            placement: params.placement(),
            ..Default::default()
        };
        if let Some(first) = params.hidden().first() {
            norm.momentum = first.norm.momentum;
            norm.epsilon = first.norm.epsilon;
        }
        let architecture = Architecture {
            hidden_layers: params.hidden().len(),
            hidden_units: params.hidden().first().map_or(0, |l| l.linear.fan_out()),
            output_dim: params.output_dim(),
            norm,
        };
        let mut tensors = Vec::new();
        for (i, layer) in params.hidden().iter().enumerate() {
            let p = |s: &str| format!("hidden.{i}.{s}");
            tensors.push(Tensor::matrix(p("weight"), &layer.linear.weight));
            tensors.push(Tensor::vector(p("bias"), &layer.linear.bias));
            tensors.push(Tensor::vector(p("gamma"), &layer.norm.gamma));
            tensors.push(Tensor::vector(p("beta"), &layer.norm.beta));
            tensors.push(Tensor::vector(p("running_mean"), &layer.norm.running_mean));
            tensors.push(Tensor::vector(p("running_var"), &layer.norm.running_var));
        }
        tensors.push(Tensor::matrix("head.weight".into(), &params.head().weight));
        tensors.push(Tensor::vector("head.bias".into(), &params.head().bias));
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: FORMAT_VERSION,
            input_dim: params.input_dim(),
            architecture,
            train_config,
            seed,
            dataset_fingerprint: dataset_fingerprint.map(fingerprint_hex),
            tensors,
        }
    }

    pub fn to_params(&self) -> Result<NetworkParams> {
        check_format(&self.format, self.version, MODEL_FORMAT)?;
        let find = |name: String| -> Result<&Tensor> {
            self.tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Format(format!("model is missing tensor '{name}'")))
        };
        let vector = |name: String| -> Result<Array1<f64>> {
            let t = find(name)?;
            if t.shape.len() != 1 || t.shape[0] != t.data.len() {
                return Err(Error::Format(format!(
                    "tensor '{}' has a bad shape",
                    t.name
                )));
            }
            Ok(Array1::from(t.data.clone()))
        };
        let matrix = |name: String| -> Result<Array2<f64>> {
            let t = find(name)?;
            if t.shape.len() != 2 {
                return Err(Error::Format(format!(
                    "tensor '{}' is not a matrix",
                    t.name
                )));
            }
            Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
                .map_err(|e| Error::Format(format!("tensor '{}': {e}", t.name)))
        };
        let norm = self.architecture.norm;
        let hidden = (0..self.architecture.hidden_layers)
            .map(|i| {
                let p = |s: &str| format!("hidden.{i}.{s}");
                Ok(HiddenLayer {
                    linear: Linear {
                        weight: matrix(p("weight"))?,
                        bias: vector(p("bias"))?,
                    },
                    norm: BatchNorm {
                        gamma: vector(p("gamma"))?,
                        beta: vector(p("beta"))?,
                        running_mean: vector(p("running_mean"))?,
                        running_var: vector(p("running_var"))?,
                        momentum: norm.momentum,
                        epsilon: norm.epsilon,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Linear {
            weight: matrix("head.weight".into())?,
            bias: vector("head.bias".into())?,
        };
        let params = NetworkParams::new(hidden, head, norm.placement)
            .map_err(|e| Error::Format(format!("inconsistent model tensors: {e}")))?;
        if params.input_dim() != self.input_dim
            || params.output_dim() != self.architecture.output_dim
        {
            return Err(Error::Format(
                "tensor shapes disagree with the declared dimensions".into(),
            ));
        }
        Ok(params)
    }
}

pub fn write_model<W: Write>(model: &ModelFile, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, model).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_model<R: std::io::Read>(input: R) -> Result<ModelFile> {
    let model: ModelFile = serde_json::from_reader(input)
        .map_err(|e| Error::Format(format!("bad model file: {e}")))?;
    check_format(&model.format, model.version, MODEL_FORMAT)?;
    Ok(model)
}
