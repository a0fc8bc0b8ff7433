//! On-disk model bundle: one directory holding a manifest, the canonical
//! config, one file per tensor and the one-class SVM as decimal text.
//!
//! ```text
//! bundle/
//!   manifest           key=value provenance and tensor list
//!   config             canonical config the bundle was trained with
//!   scaler.min.tensor  text header + little-endian f64 payload
//!   g_f.0.weights.tensor, g_f.0.bias.tensor, ...
//!   osvm.txt           alphas, support vectors, rho, gamma, nu
//!   history.tsv        per-epoch training record
//! ```
//!
//! Every file carries the config hash and seeds. Nothing time- or
//! host-dependent is written, so equal inputs give byte-identical bundles.
//! Loading validates the reconstructed pipeline before it can score.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dann::{DannModel, LambdaMode};
use crate::dataset::{DatasetMeta, FeatureMatrix, ScalerParams};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, DenseNetwork};
use crate::osvm::{KernelParams, OsvmModel};
use crate::pipeline::{PipelineKind, TrainedPipeline};

const BUNDLE_MAGIC: &str = "dinids-bundle v1";
const TENSOR_MAGIC: &str = "dinids-tensor v1";
const OSVM_MAGIC: &str = "dinids-osvm v1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub datasets: Vec<DatasetMeta>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seeds: BTreeMap<String, u64>, datasets: Vec<DatasetMeta>) -> Self {
        Self {
            config_hash: config_hash.into(),
            seeds,
            datasets,
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    /// `dann:1,data:1,osvm:1`
    pub fn seeds_field(&self) -> String {
        self.seeds
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn stamp(&self) -> String {
        format!("config_hash={}\nseeds={}\n", self.config_hash, self.seeds_field())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub pipeline: TrainedPipeline,
    pub provenance: Provenance,
    /// Canonical config text, stored verbatim.
    pub config: String,
}

struct Tensor {
    name: String,
    shape: Vec<usize>,
    extra: Vec<(String, String)>,
    values: Vec<f64>,
}

fn write_tensor(dir: &Path, t: &Tensor, prov: &Provenance) -> Result<()> {
    let path = dir.join(format!("{}.tensor", t.name));
    let mut bytes = String::new();
    let _ = writeln!(bytes, "{TENSOR_MAGIC}");
    let _ = writeln!(bytes, "name={}", t.name);
    let shape: Vec<String> = t.shape.iter().map(usize::to_string).collect();
    let _ = writeln!(bytes, "shape={}", shape.join(","));
    for (k, v) in &t.extra {
        let _ = writeln!(bytes, "{k}={v}");
    }
    bytes.push_str(&prov.stamp());
    bytes.push_str("end_header\n");
    let mut out = bytes.into_bytes();
    for v in &t.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))
}

fn split_header<'a>(path: &Path, bytes: &'a [u8], magic: &str) -> Result<(BTreeMap<String, String>, &'a [u8])> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format(path, "header not terminated"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format(path, "header is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(magic) {
        return Err(Error::format(path, format!("expected {magic:?} header")));
    }
    let mut header = BTreeMap::new();
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("bad header line {line:?}")))?;
        header.insert(k.to_string(), v.to_string());
    }
    Ok((header, &bytes[end + END.len()..]))
}

/// Shape, header fields and values of one tensor file.
type TensorParts = (Vec<usize>, BTreeMap<String, String>, Vec<f64>);

fn read_tensor(dir: &Path, name: &str) -> Result<TensorParts> {
    let path = dir.join(format!("{name}.tensor"));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let (header, payload) = split_header(&path, &bytes, TENSOR_MAGIC)?;
    let shape: Vec<usize> = header
        .get("shape")
        .ok_or_else(|| Error::format(&path, "missing shape"))?
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::format(&path, format!("bad shape entry {s:?}"))))
        .collect::<Result<_>>()?;
    let n: usize = shape.iter().product();
    if payload.len() != n * 8 {
        return Err(Error::format(
            &path,
            format!("payload holds {} bytes, shape needs {}", payload.len(), n * 8),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((shape, header, values))
}

fn network_tensors(prefix: &str, net: &DenseNetwork, out: &mut Vec<Tensor>) {
    for (i, layer) in net.layers().iter().enumerate() {
        out.push(Tensor {
            name: format!("{prefix}.{i}.weights"),
            shape: vec![layer.out_dim(), layer.in_dim()],
            extra: vec![("activation".into(), layer.activation().name().into())],
            values: layer.weights().to_vec(),
        });
        out.push(Tensor {
            name: format!("{prefix}.{i}.bias"),
            shape: vec![layer.out_dim()],
            extra: Vec::new(),
            values: layer.bias().to_vec(),
        });
    }
}

fn read_network(dir: &Path, prefix: &str, layers: usize) -> Result<DenseNetwork> {
    let mut out = Vec::with_capacity(layers);
    for i in 0..layers {
        let wname = format!("{prefix}.{i}.weights");
        let (shape, header, weights) = read_tensor(dir, &wname)?;
        let [out_dim, in_dim] = shape[..] else {
            return Err(Error::format(dir.join(&wname), "weights must be two-dimensional"));
        };
        let act = header
            .get("activation")
            .and_then(|a| Activation::from_name(a))
            .ok_or_else(|| Error::format(dir.join(&wname), "missing or unknown activation"))?;
        let (_, _, bias) = read_tensor(dir, &format!("{prefix}.{i}.bias"))?;
        out.push(DenseLayer::from_parts(in_dim, out_dim, weights, bias, act).map_err(|e| Error::Validation(e.to_string()))?);
    }
    DenseNetwork::from_layers(out).map_err(|e| Error::Validation(e.to_string()))
}

fn lambda_field(mode: LambdaMode) -> String {
    match mode {
        LambdaMode::Fixed(l) => format!("fixed:{l}"),
        LambdaMode::Scheduled { gamma_rate } => format!("scheduled:{gamma_rate}"),
    }
}

fn parse_lambda(path: &Path, v: &str) -> Result<LambdaMode> {
    let bad = || Error::format(path, format!("bad lambda field {v:?}"));
    let (kind, num) = v.split_once(':').ok_or_else(bad)?;
    let num: f64 = num.parse().map_err(|_| bad())?;
    match kind {
        "fixed" => Ok(LambdaMode::Fixed(num)),
        "scheduled" => Ok(LambdaMode::Scheduled { gamma_rate: num }),
        _ => Err(bad()),
    }
}

fn osvm_text(m: &OsvmModel, prov: &Provenance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{OSVM_MAGIC}");
    s.push_str(&prov.stamp());
    let _ = writeln!(s, "dim={}", m.dim());
    let _ = writeln!(s, "n_sv={}", m.alphas.len());
    let _ = writeln!(s, "n_train={}", m.n_train);
    // `{}` on f64 prints the shortest string that parses back exactly
    let _ = writeln!(s, "nu={}", m.nu);
    let _ = writeln!(s, "gamma={}", m.kernel.gamma);
    let _ = writeln!(s, "rho={}", m.rho);
    s.push_str("end_header\n# alpha,support vector\n");
    for (a, row) in m.alphas.iter().zip(m.support_vectors.rows()) {
        let _ = write!(s, "{a}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn read_osvm(path: &Path) -> Result<OsvmModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, body) = split_header(path, &bytes, OSVM_MAGIC)?;
    let num = |k: &str| -> Result<f64> {
        header
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(path, format!("missing or invalid {k}")))
    };
    let count = |k: &str| -> Result<usize> {
        header
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(path, format!("missing or invalid {k}")))
    };
    let (dim, n_sv) = (count("dim")?, count("n_sv")?);
    let body = std::str::from_utf8(body).map_err(|_| Error::format(path, "body is not UTF-8"))?;
    let mut alphas = Vec::with_capacity(n_sv);
    let mut values = Vec::with_capacity(n_sv * dim);
    for line in body.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse().map_err(|_| Error::format(path, format!("bad number {c:?}"))))
            .collect::<Result<_>>()?;
        if cells.len() != dim + 1 {
            return Err(Error::format(path, format!("row has {} values, expected {}", cells.len(), dim + 1)));
        }
        alphas.push(cells[0]);
        values.extend_from_slice(&cells[1..]);
    }
    if alphas.len() != n_sv {
        return Err(Error::format(path, format!("found {} support vectors, header says {n_sv}", alphas.len())));
    }
    Ok(OsvmModel {
        support_vectors: FeatureMatrix::with_width(values, dim, "z")?,
        alphas,
        rho: num("rho")?,
        kernel: KernelParams { gamma: num("gamma")? },
        nu: num("nu")?,
        n_train: count("n_train")?,
    })
}

impl ModelBundle {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.pipeline.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let prov = &self.provenance;
        let p = &self.pipeline;

        let mut tensors = vec![
            Tensor {
                name: "scaler.min".into(),
                shape: vec![p.scaler.n_cols()],
                extra: Vec::new(),
                values: p.scaler.min.clone(),
            },
            Tensor {
                name: "scaler.max".into(),
                shape: vec![p.scaler.n_cols()],
                extra: Vec::new(),
                values: p.scaler.max.clone(),
            },
        ];
        if let Some(d) = &p.dann {
            network_tensors("g_f", &d.feature_extractor, &mut tensors);
            network_tensors("g_c", &d.label_classifier, &mut tensors);
            network_tensors("g_d", &d.domain_classifier, &mut tensors);
        }
        for t in &tensors {
            write_tensor(dir, t, prov)?;
        }

        let mut m = String::new();
        let _ = writeln!(m, "{BUNDLE_MAGIC}");
        let _ = writeln!(m, "kind={}", p.kind);
        m.push_str(&prov.stamp());
        let _ = writeln!(m, "tool_version={}", prov.tool_version);
        if let Some(d) = &p.dann {
            let _ = writeln!(m, "lambda={}", lambda_field(d.lambda_mode));
            for (name, net) in [
                ("g_f", &d.feature_extractor),
                ("g_c", &d.label_classifier),
                ("g_d", &d.domain_classifier),
            ] {
                let _ = writeln!(m, "layers.{name}={}", net.layers().len());
            }
        }
        let _ = writeln!(m, "osvm={}", p.osvm.is_some());
        for (i, meta) in prov.datasets.iter().enumerate() {
            let _ = writeln!(m, "dataset.{i}.name={}", meta.name);
            let _ = writeln!(m, "dataset.{i}.n_flows={}", meta.n_flows);
            let _ = writeln!(m, "dataset.{i}.benign_fraction={}", meta.benign_fraction);
            for (class, n) in &meta.attack_class_counts {
                let _ = writeln!(m, "dataset.{i}.attack.{class}={n}");
            }
        }
        let names: Vec<&str> = tensors.iter().map(|t| t.name.as_str()).collect();
        let _ = writeln!(m, "tensors={}", names.join(","));
        let manifest = dir.join("manifest");
        fs::write(&manifest, m).map_err(|e| Error::io(&manifest, e))?;

        let config = dir.join("config");
        let text = format!("# config_hash={} seeds={}\n{}", prov.config_hash, prov.seeds_field(), self.config);
        fs::write(&config, text).map_err(|e| Error::io(&config, e))?;

        if let Some(o) = &p.osvm {
            let path = dir.join("osvm.txt");
            fs::write(&path, osvm_text(o, prov)).map_err(|e| Error::io(&path, e))?;
        }
        if let Some(h) = &p.history {
            let path = dir.join("history.tsv");
            let mut buf = format!("# config_hash={} seeds={}\n", prov.config_hash, prov.seeds_field()).into_bytes();
            h.write_tsv(&mut buf).map_err(|e| Error::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads and validates a bundle. A bundle whose parameters break a
    /// model invariant is rejected with a validation error.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest");
        let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::format(&manifest_path, "not UTF-8"))?;
        let mut lines = text.lines();
        if lines.next() != Some(BUNDLE_MAGIC) {
            return Err(Error::format(&manifest_path, "not a dinids bundle manifest"));
        }
        let mut kv = BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(&manifest_path, format!("bad line {line:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::format(&manifest_path, format!("missing {k}")))
        };
        let kind: PipelineKind = get("kind")?.parse()?;
        let seeds = get("seeds")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                let (k, v) = s.split_once(':')?;
                Some((k.to_string(), v.parse().ok()?))
            })
            .collect::<Option<BTreeMap<String, u64>>>()
            .ok_or_else(|| Error::format(&manifest_path, "bad seeds field"))?;

        let mut datasets = Vec::new();
        while let Some(name) = kv.get(&format!("dataset.{}.name", datasets.len())) {
            let i = datasets.len();
            let parse_err = || Error::format(&manifest_path, format!("bad dataset.{i} entry"));
            let prefix = format!("dataset.{i}.attack.");
            let attack_class_counts = kv
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|c| (c.to_string(), v)))
                .map(|(c, v)| v.parse().map(|n| (c, n)).map_err(|_| parse_err()))
                .collect::<Result<_>>()?;
            datasets.push(DatasetMeta {
                name: name.clone(),
                n_flows: get(&format!("dataset.{i}.n_flows"))?.parse().map_err(|_| parse_err())?,
                benign_fraction: get(&format!("dataset.{i}.benign_fraction"))?
                    .parse()
                    .map_err(|_| parse_err())?,
                attack_class_counts,
            });
        }
        let provenance = Provenance {
            config_hash: get("config_hash")?.to_string(),
            seeds,
            datasets,
            tool_version: get("tool_version")?.to_string(),
        };

        let (_, _, min) = read_tensor(dir, "scaler.min")?;
        let (_, _, max) = read_tensor(dir, "scaler.max")?;
        let scaler = ScalerParams { min, max };
        let dann = match kv.get("lambda") {
            Some(l) => {
                let layers = |n: &str| -> Result<usize> {
                    get(&format!("layers.{n}"))?
                        .parse()
                        .map_err(|_| Error::format(&manifest_path, format!("bad layers.{n}")))
                };
                Some(DannModel {
                    feature_extractor: read_network(dir, "g_f", layers("g_f")?)?,
                    label_classifier: read_network(dir, "g_c", layers("g_c")?)?,
                    domain_classifier: read_network(dir, "g_d", layers("g_d")?)?,
                    lambda_mode: parse_lambda(&manifest_path, l)?,
                })
            }
            None => None,
        };
        let osvm = if get("osvm")? == "true" {
            Some(read_osvm(&dir.join("osvm.txt"))?)
        } else {
            None
        };
        let config_path = dir.join("config");
        let config = fs::read_to_string(&config_path)
            .map_err(|e| Error::io(&config_path, e))?
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect();

        let pipeline = TrainedPipeline {
            kind,
            scaler,
            dann,
            osvm,
            history: None,
        };
        pipeline.validate()?;
        Ok(Self {
            pipeline,
            provenance,
            config,
        })
    }
}

/// Reads just the history table of a bundle, if one was saved.
pub fn load_history_text(dir: impl AsRef<Path>) -> Result<Option<String>> {
    let path = dir.as_ref().join("history.tsv");
    if !path.exists() {
        return Ok(None);
    }
    fs::read_to_string(&path).map(Some).map_err(|e| Error::io(&path, e))
}

