use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lesioneval::features::PcaRoute;
use lesioneval::labeling::Connectivity;
use lesioneval::report::{
    self, svg, CompareOptions, CompareTest, EvaluateOptions, ExplainOptions, FdrFamily, MetricTable, NdscR,
};
use lesioneval::split::{read_manifest, stratified_group_split_with_bins, DEFAULT_BINS, DEFAULT_RATIO};
use lesioneval::stats::{MethodChoice, DEFAULT_Q};
use lesioneval::volume::DEFAULT_THRESHOLD;
use lesioneval::{phantom, Error};

#[derive(Parser)]
#[command(name = "lesioneval", version, about = "Lesion segmentation evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct Shared {
    /// Voxel adjacency for connected components.
    #[arg(long, global = true, default_value = "26")]
    connectivity: Connectivity,
    /// nDSC reference foreground fraction: a number in (0, 1) or "auto".
    #[arg(long, global = true, default_value = "auto")]
    ndsc_r: NdscR,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "lesioneval-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Score prediction masks against ground truth.
    Evaluate {
        /// Pairs manifest CSV.
        #[arg(long)]
        pairs: PathBuf,
        /// Voxels strictly above this value are foreground.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = report::DEFAULT_BINS_PER_DECADE)]
        bins_per_decade: usize,
    },
    /// Stratified, subject-grouped train/test split.
    Split {
        /// Scan manifest CSV.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RATIO)]
        ratio: f64,
        /// Quantile bins per lesion covariate.
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Rank tests between models or groups of scans.
    Compare {
        /// NAME=per_scan.csv; the first model is the baseline.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long, value_enum, default_value = "wilcoxon")]
        test: TestArg,
        /// Comma-separated metric columns.
        #[arg(long, value_delimiter = ',', default_values_t = report::DEFAULT_METRICS.map(String::from))]
        metrics: Vec<String>,
        /// Column whose levels form the groups for unpaired tests.
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long, value_enum, default_value = "all")]
        fdr_family: FamilyArg,
        #[arg(long, default_value_t = DEFAULT_Q)]
        q: f64,
        #[arg(long, value_enum, default_value = "auto")]
        method: MethodArg,
    },
    /// PCA of per-scan feature tensors and correlation with covariates.
    Explain {
        /// Directory holding `<scan_id>.json` descriptors and payloads.
        #[arg(long)]
        features: PathBuf,
        /// CSV with scan_id,split,site,modality,field_strength and optional
        /// numeric covariate columns.
        #[arg(long)]
        metadata: PathBuf,
        /// Per-scan evaluation CSV to draw extra covariates from.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Columns taken from --covariates.
        #[arg(long, value_delimiter = ',', default_values_t = ["dsc".to_string(), "ndsc".to_string()])]
        covariate_columns: Vec<String>,
        /// Covariates passed through the rank quantile transform.
        #[arg(long, value_delimiter = ',')]
        quantile: Vec<String>,
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[arg(long, value_enum, default_value = "auto")]
        route: RouteArg,
    },
    /// Render radar and histogram SVGs from evaluation reports.
    Report {
        /// NAME=report.json, one per model.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
    },
    /// Write the synthetic phantom suite.
    Phantom,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Wilcoxon,
    MannWhitney,
    Kruskal,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    All,
    Metric,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Auto,
    Gram,
    Covariance,
}

fn named_path(s: &str) -> anyhow::Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => bail!("expected NAME=PATH, got {s:?}"),
    }
}

fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let shared = cli.shared;
    match cli.command {
        Command::Evaluate {
            pairs,
            threshold,
            bins_per_decade,
        } => {
            let records = report::read_pairs_manifest(&pairs)?;
            let opts = EvaluateOptions {
                connectivity: shared.connectivity,
                ndsc_r: shared.ndsc_r,
                threshold,
                jobs: shared.jobs,
                bins_per_decade,
            };
            let rep = match report::evaluate(&records, &opts) {
                Err(Error::AllPairsFailed(n)) => bail!("all {n} scan pairs failed; see warnings above"),
                other => other?,
            };
            report::write_evaluation(&shared.out, &rep)?;
            for f in &rep.failures {
                eprintln!("failed: {}: {}", f.scan_id, f.error);
            }
            println!(
                "evaluated {} scans ({} failed), r = {}, written to {}",
                rep.scans.len(),
                rep.failures.len(),
                lesioneval::format::fmt6(rep.metadata.ndsc_r),
                shared.out.display()
            );
            Ok(if rep.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Split { manifest, ratio, bins } => {
            let records = read_manifest(&manifest)?;
            let result = stratified_group_split_with_bins(&records, ratio, shared.seed, bins)?;
            create_out(&shared.out)?;
            report::write_report_json(&shared.out.join("split.json"), &result)?;
            println!(
                "train {} scans / test {} scans, seed {}",
                result.train.len(),
                result.test.len(),
                result.seed
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            models,
            test,
            metrics,
            group_by,
            fdr_family,
            q,
            method,
        } => {
            let tables = models
                .iter()
                .map(|m| {
                    let (name, path) = named_path(m)?;
                    Ok(MetricTable::read(name, path)?)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let opts = CompareOptions {
                test: match test {
                    TestArg::Wilcoxon => CompareTest::Wilcoxon,
                    TestArg::MannWhitney => CompareTest::MannWhitney,
                    TestArg::Kruskal => CompareTest::Kruskal,
                },
                metrics,
                group_by,
                fdr_family: match fdr_family {
                    FamilyArg::All => FdrFamily::All,
                    FamilyArg::Metric => FdrFamily::Metric,
                    FamilyArg::None => FdrFamily::None,
                },
                q,
                method: match method {
                    MethodArg::Auto => MethodChoice::Auto,
                    MethodArg::Exact => MethodChoice::Exact,
                    MethodArg::Normal => MethodChoice::NormalApprox,
                },
            };
            let rows = report::compare(&tables, &opts)?;
            create_out(&shared.out)?;
            report::write_comparison_csv(&shared.out.join("comparison.csv"), &rows)?;
            println!("{} comparisons written to {}", rows.len(), shared.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Explain {
            features,
            metadata,
            covariates,
            covariate_columns,
            quantile,
            components,
            route,
        } => {
            let (scans, mut covs) = report::read_scan_metadata(&metadata)?;
            if let Some(path) = covariates {
                let table = MetricTable::read("covariates", &path)?;
                for col in &covariate_columns {
                    let values = table.numeric(col)?;
                    let lookup: std::collections::HashMap<&str, Option<f64>> =
                        table.scan_ids.iter().map(String::as_str).zip(values).collect();
                    let aligned = scans
                        .iter()
                        .map(|s| lookup.get(s.scan_id.as_str()).copied().flatten())
                        .collect();
                    covs.push((col.clone(), aligned));
                }
            }
            let opts = ExplainOptions {
                n_components: components,
                route: match route {
                    RouteArg::Auto => PcaRoute::Auto,
                    RouteArg::Gram => PcaRoute::Gram,
                    RouteArg::Covariance => PcaRoute::Covariance,
                },
                quantile,
                jobs: shared.jobs,
            };
            let vectors = report::load_feature_vectors(&features, &scans, opts.jobs)?;
            let res = report::explain(&scans, &vectors, &covs, &opts)?;
            create_out(&shared.out)?;
            report::write_embedding_csv(&shared.out.join("embedding.csv"), &res.embedding, components)?;
            report::write_correlations_csv(&shared.out.join("correlations.csv"), &res.report.correlations, components)?;
            report::write_report_json(&shared.out.join("explain.json"), &res.report)?;
            let ratios: Vec<String> = res
                .report
                .explained_variance_ratio
                .iter()
                .map(|r| lesioneval::format::fmt6(*r))
                .collect();
            println!("explained variance ratio: {}", ratios.join(", "));
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { inputs } => {
            create_out(&shared.out)?;
            let mut series = Vec::new();
            for input in &inputs {
                let (name, path) = named_path(input)?;
                let rep = report::read_evaluation(&path)?;
                series.push(svg::RadarSeries::from_report(&name, &rep)?);
                let file = shared.out.join(format!("histogram_{name}.svg"));
                fs::write(&file, svg::render_histogram(&name, &rep.histogram))
                    .with_context(|| format!("writing {}", file.display()))?;
            }
            let radar = shared.out.join("radar.svg");
            fs::write(&radar, svg::render_radar(&series)).with_context(|| format!("writing {}", radar.display()))?;
            println!("plots written to {}", shared.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Phantom => {
            phantom::write_suite(&shared.out)?;
            println!("phantom suite written to {}", shared.out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
