//! Python module `epg`: build execution property graphs from trace documents,
//! run the attack detectors and export graphs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use epg_core::cli::{self, AnalysisReport, AnalyzeOptions, Built, Detector, TraversalOutput};
use epg_core::detect::{self, DetectorConfig, PriceTable, Refinement};
use epg_core::graph::{write_graph, ContractGranularity, ExportFormat, GraphKind};
use epg_core::Address;

create_exception!(epg, EpgError, PyException, "Raised for malformed input, bad options and analysis failures.");

fn fail(e: impl std::fmt::Display) -> PyErr {
    EpgError::new_err(e.to_string())
}

fn read(path: &PathBuf) -> PyResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| fail(format!("cannot read {}: {e}", path.display())))
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "epg")]
#[derive(Clone)]
struct Witness {
    name: String,
    element: String,
    id: usize,
}

#[pymethods]
impl Witness {
    fn __repr__(&self) -> String {
        format!("Witness({}={} {})", self.name, self.element, self.id)
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "epg")]
#[derive(Clone)]
struct Finding {
    rule: String,
    victim: String,
    pc: u64,
    note: String,
    refinements: Vec<String>,
    witnesses: Vec<Witness>,
}

#[pymethods]
impl Finding {
    /// Id of the witness with this name, if any.
    fn witness(&self, name: &str) -> Option<usize> {
        self.witnesses.iter().find(|w| w.name == name).map(|w| w.id)
    }

    fn __repr__(&self) -> String {
        format!("Finding({} victim={} pc={})", self.rule, self.victim, self.pc)
    }
}

impl From<&detect::Finding> for Finding {
    fn from(f: &detect::Finding) -> Self {
        let json = |v: serde_json::Value| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
        Finding {
            rule: json(serde_json::to_value(f.rule).unwrap_or_default()),
            victim: f.victim.to_string(),
            pc: f.pc,
            note: f.note.clone(),
            refinements: f.refinements_applied.iter().map(|r| r.name().to_string()).collect(),
            witnesses: f
                .witnesses
                .iter()
                .map(|w| Witness {
                    name: w.name.clone(),
                    element: json(serde_json::to_value(w.element).unwrap_or_default()),
                    id: w.id,
                })
                .collect(),
        }
    }
}

/// Output of `analyze`: the same content as the CLI's JSON report.
#[pyclass(frozen, module = "epg")]
struct Report {
    inner: AnalysisReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn tx_hash(&self) -> &str {
        &self.inner.tx_hash
    }

    #[getter]
    fn detectors_run(&self) -> Vec<String> {
        self.inner.detectors_run.iter().map(|d| d.name().to_string()).collect()
    }

    #[getter]
    fn findings(&self) -> Vec<Finding> {
        self.inner.findings.iter().map(Finding::from).collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.stats.vertex_count
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.stats.edge_count
    }

    /// 0 when nothing was found, 2 otherwise.
    #[getter]
    fn exit_code(&self) -> u8 {
        self.inner.exit_code()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Report({} findings for {})", self.inner.findings.len(), self.inner.tx_hash)
    }
}

/// Keyword options shared by `analyze`, `analyze_file` and `Transaction.findings`.
struct Options {
    config: Option<PathBuf>,
    refinements: Option<Vec<String>>,
    attacker_contracts: Option<Vec<String>>,
    p1_threshold: Option<f64>,
    p2_threshold_usd: Option<f64>,
    allowlist: Option<PathBuf>,
}

impl Options {
    fn detector_config(&self) -> PyResult<DetectorConfig> {
        let mut cfg = match &self.config {
            Some(p) => cli::load_config(p).map_err(fail)?,
            None => DetectorConfig::default(),
        };
        if let Some(rs) = &self.refinements {
            cfg.refinements = rs.iter().map(|r| r.parse::<Refinement>()).collect::<Result<BTreeSet<_>, _>>().map_err(fail)?;
        }
        if let Some(list) = &self.attacker_contracts {
            for a in list {
                cfg.attacker_contracts.insert(a.parse::<Address>().map_err(fail)?);
            }
        }
        if let Some(t) = self.p1_threshold {
            cfg.price_fluctuation_threshold = t;
        }
        if let Some(t) = self.p2_threshold_usd {
            cfg.usd_value_threshold = t;
        }
        if self.allowlist.is_some() {
            cfg.allowlist.clone_from(&self.allowlist);
        }
        cfg.validate().map_err(fail)?;
        Ok(cfg)
    }
}

fn analyze_options(opts: &Options, detectors: Option<Vec<String>>, prices: Option<PathBuf>) -> PyResult<AnalyzeOptions> {
    let detectors = match detectors {
        Some(ds) => ds.iter().map(|d| d.parse::<Detector>()).collect::<Result<BTreeSet<_>, _>>().map_err(fail)?,
        None => Detector::ALL.into_iter().collect(),
    };
    let prices = prices.map(|p| PriceTable::load(&p)).transpose().map_err(fail)?;
    Ok(AnalyzeOptions { detectors, config: opts.detector_config()?, prices })
}

/// Analyzes one trace document given as bytes or str.
#[pyfunction]
#[pyo3(signature = (
    data, *, detectors=None, refinements=None, config=None, prices=None,
    attacker_contracts=None, p1_threshold=None, p2_threshold_usd=None, allowlist=None
))]
#[allow(clippy::too_many_arguments)]
fn analyze(
    py: Python<'_>,
    data: Vec<u8>,
    detectors: Option<Vec<String>>,
    refinements: Option<Vec<String>>,
    config: Option<PathBuf>,
    prices: Option<PathBuf>,
    attacker_contracts: Option<Vec<String>>,
    p1_threshold: Option<f64>,
    p2_threshold_usd: Option<f64>,
    allowlist: Option<PathBuf>,
) -> PyResult<Report> {
    let opts = Options { config, refinements, attacker_contracts, p1_threshold, p2_threshold_usd, allowlist };
    let aopts = analyze_options(&opts, detectors, prices)?;
    let inner = py.detach(|| cli::analyze(&data, &aopts)).map_err(fail)?;
    Ok(Report { inner })
}

/// Like `analyze`, reading the trace from a file.
#[pyfunction]
#[pyo3(signature = (
    path, *, detectors=None, refinements=None, config=None, prices=None,
    attacker_contracts=None, p1_threshold=None, p2_threshold_usd=None, allowlist=None
))]
#[allow(clippy::too_many_arguments)]
fn analyze_file(
    py: Python<'_>,
    path: PathBuf,
    detectors: Option<Vec<String>>,
    refinements: Option<Vec<String>>,
    config: Option<PathBuf>,
    prices: Option<PathBuf>,
    attacker_contracts: Option<Vec<String>>,
    p1_threshold: Option<f64>,
    p2_threshold_usd: Option<f64>,
    allowlist: Option<PathBuf>,
) -> PyResult<Report> {
    let data = read(&path)?;
    analyze(py, data, detectors, refinements, config, prices, attacker_contracts, p1_threshold, p2_threshold_usd, allowlist)
}

/// A parsed, replayed transaction with its graph.
#[pyclass(frozen, module = "epg")]
struct Transaction {
    built: Built,
}

fn granularity(per_frame: bool) -> ContractGranularity {
    if per_frame {
        ContractGranularity::Frame
    } else {
        ContractGranularity::Address
    }
}

#[pymethods]
impl Transaction {
    /// `per_frame=False` merges all frames of one address into a single
    /// contract vertex; the detectors and `traverse` need the default.
    #[new]
    #[pyo3(signature = (data, *, per_frame=true))]
    fn new(py: Python<'_>, data: Vec<u8>, per_frame: bool) -> PyResult<Self> {
        let built = py.detach(|| cli::build(&data, &DetectorConfig::default(), granularity(per_frame))).map_err(fail)?;
        Ok(Transaction { built })
    }

    #[staticmethod]
    #[pyo3(signature = (path, *, per_frame=true))]
    fn from_file(py: Python<'_>, path: PathBuf, per_frame: bool) -> PyResult<Self> {
        Self::new(py, read(&path)?, per_frame)
    }

    #[getter]
    fn tx_hash(&self) -> String {
        format!("{:#066x}", self.built.trace.envelope.tx_hash)
    }

    #[getter]
    fn step_count(&self) -> usize {
        self.built.trace.steps.len()
    }

    #[getter]
    fn frame_count(&self) -> usize {
        self.built.tree.len()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.built.epg.graph.vertex_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.built.epg.graph.edge_count()
    }

    /// Callee address of every frame, in frame order.
    fn callees(&self) -> Vec<String> {
        self.built.tree.frames().iter().map(|f| f.callee.to_string()).collect()
    }

    /// Graph vertex of a call frame.
    fn frame_vertex(&self, frame: usize) -> PyResult<usize> {
        if frame >= self.built.tree.len() {
            return Err(fail(format!("no frame {frame}")));
        }
        Ok(self.built.epg.frame_vertex(frame))
    }

    /// Entry pc of a basic-block vertex, or None for other vertices.
    fn block_pc(&self, vertex: usize) -> Option<u64> {
        self.built.epg.block(vertex).map(|b| b.pc)
    }

    /// Serializes the whole graph or one of its layers (`ctg`, `dcfg`, `ddg`, `epg`)
    /// as `dot` or `graphson`.
    #[pyo3(signature = (graph="epg", format="dot"))]
    fn export(&self, graph: &str, format: &str) -> PyResult<String> {
        let kind: GraphKind = graph.parse().map_err(fail)?;
        let format: ExportFormat = format.parse().map_err(fail)?;
        let mut buf = Vec::new();
        write_graph(&self.built.epg.subgraph(kind), format, &mut buf).map_err(fail)?;
        String::from_utf8(buf).map_err(fail)
    }

    /// Evaluates a built-in traversal by name. Returns vertex ids, or
    /// `(v0, v)` pairs for `reentrant-pairs`.
    #[pyo3(signature = (name, vertices=Vec::new()))]
    fn traverse(&self, py: Python<'_>, name: &str, vertices: Vec<usize>) -> PyResult<Py<PyAny>> {
        let a = self.built.analysis().map_err(fail)?;
        let out = cli::named_traversal(&a, name, &vertices).map_err(fail)?;
        let obj = match out {
            TraversalOutput::Vertices(vs) => vs.into_iter().collect::<Vec<_>>().into_pyobject(py)?.into_any().unbind(),
            TraversalOutput::Pairs(ps) => ps.into_pyobject(py)?.into_any().unbind(),
        };
        Ok(obj)
    }

    /// Runs the detectors on this transaction and returns the findings.
    #[pyo3(signature = (
        *, detectors=None, refinements=None, config=None, prices=None,
        attacker_contracts=None, p1_threshold=None, p2_threshold_usd=None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn findings(
        &self,
        py: Python<'_>,
        detectors: Option<Vec<String>>,
        refinements: Option<Vec<String>>,
        config: Option<PathBuf>,
        prices: Option<PathBuf>,
        attacker_contracts: Option<Vec<String>>,
        p1_threshold: Option<f64>,
        p2_threshold_usd: Option<f64>,
    ) -> PyResult<Vec<Finding>> {
        let opts = Options { config, refinements, attacker_contracts, p1_threshold, p2_threshold_usd, allowlist: None };
        let aopts = analyze_options(&opts, detectors, prices)?;
        let found = py.detach(|| cli::run_detectors(&self.built, &aopts)).map_err(fail)?;
        Ok(found.iter().map(Finding::from).collect())
    }

    fn __repr__(&self) -> String {
        format!("Transaction({} frames, {} vertices)", self.built.tree.len(), self.built.epg.graph.vertex_count())
    }
}

/// JSON schema of the report produced by `Report.to_json`.
#[pyfunction]
fn report_schema() -> &'static str {
    cli::REPORT_SCHEMA
}

#[pymodule]
fn epg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EpgError", m.py().get_type::<EpgError>())?;
    m.add_class::<Transaction>()?;
    m.add_class::<Report>()?;
    m.add_class::<Finding>()?;
    m.add_class::<Witness>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_file, m)?)?;
    m.add_function(wrap_pyfunction!(report_schema, m)?)?;
    Ok(())
}
