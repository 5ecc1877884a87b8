use std::fmt;
use std::path::Path;
use std::time::Instant;

use hnne::dataio::{self, DatasetSpec, Format, Synthetic};
use hnne::hierarchy::{build_hierarchy, partition_at_level};
use hnne::linproj::PcaLevel;
use hnne::metrics::{self, MetricsReport};
use hnne::plot::{render_scatter, PlotStyle};
use hnne::{fit, DataMatrix, FitParams, HnneError, NnBackend, ProjectionModel};
use serde_json::{json, Value};

use crate::{
    BenchArgs, Command, FitArgs, InputArgs, LabelsArgs, MetricName, MetricsArgs, NnChoice,
    PlotArgs, SynthArgs, TransformArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<HnneError> for CliError {
    fn from(e: HnneError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn with_path<T>(path: &Path, r: hnne::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Labels(a) => cmd_labels(a),
    }
}

fn backend(choice: NnChoice, seed: u64) -> NnBackend {
    match choice {
        NnChoice::Auto => NnBackend::Auto { seed },
        NnChoice::Exact => NnBackend::Exact,
        NnChoice::Approx => NnBackend::Approx { seed },
    }
}

fn nn_name(choice: NnChoice) -> &'static str {
    match choice {
        NnChoice::Auto => "auto",
        NnChoice::Exact => "exact",
        NnChoice::Approx => "approx",
    }
}

/// Loads the dataset named by the input flags; returns a description for manifests.
fn load_input(a: &InputArgs) -> CliResult<(DataMatrix, Option<Vec<i64>>, String)> {
    let (spec, desc) = match (&a.synthetic, &a.input) {
        (Some(g), _) => (DatasetSpec::synthetic(*g), g.to_string()),
        (None, Some(path)) => {
            let mut s = DatasetSpec::file(path);
            s.format = a.format;
            s.has_header = a.header;
            (s, path.clone())
        }
        (None, None) => return Err(CliError::Usage("either --input or --synthetic is required".into())),
    };
    let spec = DatasetSpec {
        labels_path: a.labels.clone(),
        ..spec
    };
    let (x, labels) = dataio::load(&spec).map_err(|e| CliError::Runtime(format!("{desc}: {e}")))?;
    Ok((x, labels, desc))
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let (x, labels, desc) = load_input(&a.input)?;
    let mut p = FitParams::new(a.dim as usize);
    p.init = a.init;
    p.radius_fraction = a.radius_fraction;
    p.shrink = a.shrink;
    p.guarantee = a.guarantee;
    p.inflate = a.inflate;
    p.transform_level = a.transform_level;
    p.seed = a.seed;
    p.backend = backend(a.nn, a.seed);
    p.pca_threshold = a.pca_threshold;
    if let Err(e) = p.translate_params() {
        return Err(CliError::Usage(e.to_string()));
    }

    let start = Instant::now();
    let out = fit(&x, &p)?;
    let secs = start.elapsed().as_secs_f64();
    log::info!("fit {}x{} -> {} in {secs:.3}s", x.rows(), x.cols(), a.dim);

    with_path(&a.out, dataio::save_matrix(&a.out, None, &out.embedding))?;
    if let Some(m) = &a.model {
        with_path(m, out.model.save(m))?;
    }
    if let (Some(path), Some(l)) = (&a.labels_out, &labels) {
        with_path(path, dataio::write_labels(path, l))?;
    }
    let tp = out.model.params();
    let manifest = json!({
        "command": "fit",
        "version": env!("CARGO_PKG_VERSION"),
        "input": desc,
        "labels": a.input.labels.as_ref().map(|p| p.display().to_string()),
        "rows": x.rows(),
        "input_dim": x.cols(),
        "params": {
            "dim": a.dim,
            "init": p.init.as_str(),
            "radius_fraction": tp.radius_fraction,
            "shrink": tp.shrink,
            "guarantee": p.guarantee,
            "inflate": p.inflate,
            "transform_level": out.model.lookup_level(),
            "seed": p.seed,
            "nn": nn_name(a.nn),
            "pca_threshold": p.pca_threshold,
        },
        "threads": rayon::current_num_threads(),
        "wall_clock_seconds": secs,
        "base_components": out.hierarchy.base_partition().groups(),
        "hierarchy_levels": out.hierarchy.level_sizes(),
        "pca_level": match out.pca_level {
            PcaLevel::Points => json!("points"),
            PcaLevel::Centroids(l) => json!(l),
        },
        "linear_fit_rows": out.linear_fit_rows,
        "outputs": {
            "embedding": a.out.display().to_string(),
            "model": a.model.as_ref().map(|m| m.display().to_string()),
        },
    });
    let manifest_path = a.manifest.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".json");
        s.into()
    });
    write_json(&manifest_path, &manifest)
}

fn cmd_transform(a: TransformArgs) -> CliResult<()> {
    let model = with_path(&a.model, ProjectionModel::load(&a.model))?;
    let x = with_path(&a.input, dataio::load_matrix(&a.input, a.format, a.header))?;
    let y = model.transform(&x)?;
    with_path(&a.out, dataio::save_matrix(&a.out, None, &y))
}

pub fn report_json(r: &MetricsReport) -> Value {
    json!({
        "trustworthiness": r.trustworthiness,
        "trustworthiness_k": r.trustworthiness_k,
        "knn_accuracy": r.knn_accuracy.iter().map(|s| json!({
            "k": s.k,
            "accuracy": s.accuracy,
            "folds": s.folds,
        })).collect::<Vec<_>>(),
        "cta": r.cta,
        "runtime_seconds": r.runtime_seconds,
    })
}

fn cmd_metrics(a: MetricsArgs) -> CliResult<()> {
    let high = with_path(&a.high, dataio::load_matrix(&a.high, None, a.header))?;
    let low = with_path(&a.low, dataio::load_matrix(&a.low, None, a.header))?;
    let labels = match &a.labels {
        Some(p) => {
            let l = with_path(p, dataio::read_labels(p))?;
            with_path(p, dataio::check_labels(&l, high.rows()))?;
            Some(l)
        }
        None => None,
    };
    let classes = labels.as_ref().map_or(0, |l| {
        let mut c = l.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    });
    let wanted = if a.metrics.is_empty() {
        let mut w = vec![MetricName::Trust];
        if labels.is_some() {
            w.push(MetricName::Knn);
        }
        if classes >= 3 {
            w.push(MetricName::Cta);
        }
        w
    } else {
        a.metrics.clone()
    };
    for m in &wanted {
        if *m != MetricName::Trust && labels.is_none() {
            return Err(CliError::Usage(format!("metric {m:?} needs --labels").to_lowercase()));
        }
    }
    if wanted.contains(&MetricName::Cta) && classes < 3 {
        return Err(CliError::Usage(format!(
            "centroid triplet accuracy needs at least 3 classes, the labels have {classes}"
        )));
    }

    let start = Instant::now();
    let mut report = MetricsReport {
        trustworthiness_k: a.trust_k,
        ..MetricsReport::default()
    };
    if wanted.contains(&MetricName::Trust) {
        report.trustworthiness = Some(metrics::trustworthiness(&high, &low, a.trust_k)?);
    }
    if let (true, Some(l)) = (wanted.contains(&MetricName::Knn), &labels) {
        for &k in &a.knn_k {
            let cv = metrics::knn_accuracy_cv(&low, l, k, a.folds, a.seed)?;
            report.knn_accuracy.push(metrics::KnnScore {
                k,
                accuracy: cv.mean_accuracy(),
                folds: cv.folds(),
            });
        }
    }
    if let (true, Some(l)) = (wanted.contains(&MetricName::Cta), &labels) {
        report.cta = Some(metrics::centroid_triplet_accuracy(&high, &low, l)?);
    }
    report.runtime_seconds = start.elapsed().as_secs_f64();
    println!("{}", report_json(&report));
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> CliResult<()> {
    let e = with_path(&a.input, dataio::load_matrix(&a.input, None, false))?;
    let labels = match &a.labels {
        Some(p) => {
            let l = with_path(p, dataio::read_labels(p))?;
            with_path(p, dataio::check_labels(&l, e.rows()))?;
            Some(l)
        }
        None => None,
    };
    if e.cols() != 2 {
        return Err(CliError::Runtime(format!(
            "{}: plotting needs a 2-D embedding, got {} columns",
            a.input.display(),
            e.cols()
        )));
    }
    with_path(&a.out, render_scatter(&e, labels.as_deref(), &a.out, &PlotStyle::default()))
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let gen = match a.seed {
        Some(s) => a.spec.with_seed(s),
        None => a.spec,
    };
    let (x, labels) = gen.generate().map_err(|e| CliError::Usage(e.to_string()))?;
    with_path(&a.out, dataio::save_matrix(&a.out, None, &x))?;
    if let Some(p) = &a.labels_out {
        match &labels {
            Some(l) => with_path(p, dataio::write_labels(p, l))?,
            None => return Err(CliError::Usage(format!("generator '{gen}' produces no labels"))),
        }
    }
    Ok(())
}

/// Peak resident set size of this process in MiB, where the OS reports it.
fn peak_rss_mib() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_bench(a: BenchArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    if let Some(path) = &a.stream_load {
        let start = Instant::now();
        let m = with_path(path, dataio::load_matrix(path, Some(Format::F32Raw), false))?;
        let secs = start.elapsed().as_secs_f64();
        let matrix_mib = (m.rows() * m.cols() * std::mem::size_of::<f64>()) as f64 / (1024.0 * 1024.0);
        let peak = peak_rss_mib().unwrap_or(f64::NAN);
        println!("task\tsource\tshape\tmatrix_mib\tpeak_rss_mib\tseconds");
        println!(
            "stream-load\t{}\t{}x{}\t{matrix_mib:.1}\t{peak:.1}\t{secs:.3}",
            path.display(),
            m.rows(),
            m.cols()
        );
        drop(m);
        rows.push(json!({
            "task": "stream-load",
            "source": path.display().to_string(),
            "matrix_mib": matrix_mib,
            "peak_rss_mib": peak,
            "seconds": secs,
        }));
    }
    if a.stream_load.is_none() || !a.datasets.is_empty() {
        println!("dataset\trows\tinput_dim\tdim\trepeats\tmean_seconds\tstd_seconds\tmin_seconds");
    }
    for name in &a.datasets {
        let input = match name.parse::<Synthetic>() {
            Ok(g) => InputArgs {
                input: None,
                synthetic: Some(g),
                format: None,
                header: false,
                labels: None,
            },
            Err(_) => InputArgs {
                input: Some(name.clone()),
                synthetic: None,
                format: None,
                header: false,
                labels: None,
            },
        };
        let (x, _, desc) = load_input(&input)?;
        let mut p = FitParams::new(a.dim as usize);
        p.seed = a.seed;
        p.backend = NnBackend::Auto { seed: a.seed };
        let mut times = Vec::with_capacity(a.repeats as usize);
        for _ in 0..a.repeats {
            let start = Instant::now();
            fit(&x, &p)?;
            times.push(start.elapsed().as_secs_f64());
        }
        let (mean, std) = mean_std(&times);
        let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "{desc}\t{}\t{}\t{}\t{}\t{mean:.4}\t{std:.4}\t{min:.4}",
            x.rows(),
            x.cols(),
            a.dim,
            a.repeats
        );
        rows.push(json!({
            "task": "fit",
            "dataset": desc,
            "rows": x.rows(),
            "input_dim": x.cols(),
            "dim": a.dim,
            "repeats": a.repeats,
            "seconds": times,
            "mean_seconds": mean,
            "std_seconds": std,
        }));
    }
    if let Some(m) = &a.manifest {
        write_json(
            m,
            &json!({
                "command": "bench",
                "version": env!("CARGO_PKG_VERSION"),
                "seed": a.seed,
                "threads": rayon::current_num_threads(),
                "results": rows,
            }),
        )?;
    }
    Ok(())
}

fn cmd_labels(a: LabelsArgs) -> CliResult<()> {
    let (x, _, _) = load_input(&a.input)?;
    let h = build_hierarchy(&x, backend(a.nn, a.seed))?;
    let n_levels = h.levels().len();
    if a.level >= n_levels.max(1) {
        return Err(CliError::Usage(format!(
            "level {} out of range: the hierarchy has {n_levels} level(s)",
            a.level
        )));
    }
    let part = partition_at_level(&h, a.level)?;
    let labels: Vec<i64> = part.labels().iter().map(|&l| l as i64).collect();
    with_path(&a.out, dataio::write_labels(&a.out, &labels))
}
