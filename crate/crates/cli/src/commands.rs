use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use bfpo_core::equivalence::audit_equivalence;
use bfpo_core::optim::{csv_header, train_repeated, RepeatedRuns, RNG_SCHEMA};
use bfpo_core::{ActionSpace, TabularPolicy};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, LabelSpec, Method};
use crate::output::{write_atomic, write_json};
use crate::svg::probability_plot;
use crate::{Failure, Globals, SweepParam};

type CmdResult = Result<(), Failure>;

fn out_dir(g: &Globals, cfg: Option<&ExperimentConfig>) -> PathBuf {
    g.out.clone().or_else(|| cfg.and_then(|c| c.output_dir.clone())).unwrap_or_else(|| PathBuf::from("out"))
}

fn labels(n: usize) -> Vec<String> {
    let space = ActionSpace::new(n).expect("n >= 1");
    (0..n).map(|i| space.label(i)).collect()
}

fn named(ranking: &[usize], names: &[String]) -> Vec<String> {
    ranking.iter().map(|&i| names[i].clone()).collect()
}

pub fn gen(g: &Globals, config: &Path) -> CmdResult {
    let cfg = ExperimentConfig::load(config)?;
    let dir = out_dir(g, Some(&cfg));
    let (gt, data) = cfg.generate()?;
    write_atomic(&dir.join("dataset.jsonl"), data.to_jsonl().as_bytes())?;
    let mut truth = gt.to_json();
    truth.push('\n');
    write_atomic(&dir.join("ground_truth.json"), truth.as_bytes())?;
    g.note(format!("wrote {} records to {}", data.len(), dir.join("dataset.jsonl").display()));
    println!("{}", data.digest());
    Ok(())
}

struct MethodRuns {
    method: Method,
    runs: RepeatedRuns,
}

fn run_methods(g: &Globals, cfg: &ExperimentConfig, methods: &[Method]) -> anyhow::Result<Vec<MethodRuns>> {
    let data = cfg.train_data()?;
    let n = cfg.truth()?.n();
    let u = TabularPolicy::uniform(n)?;
    let base_seed = g.seed.unwrap_or(cfg.train.seed);
    methods
        .iter()
        .map(|&method| {
            let kind = cfg.loss(method)?;
            g.note(format!("training {} ({} runs x {} steps)", kind.name(), cfg.n_runs, cfg.train.steps));
            let runs = train_repeated(&u, &u, &data, &kind, &cfg.train, cfg.n_runs, base_seed)?;
            Ok(MethodRuns { method, runs })
        })
        .collect()
}

fn curves_csv(results: &[MethodRuns], n: usize) -> String {
    let mut out = csv_header(n);
    out.push('\n');
    for r in results {
        for run in &r.runs.runs {
            out.push_str(&run.csv_rows());
        }
    }
    out
}

fn mean_csv(results: &[MethodRuns], n: usize) -> String {
    let mut out = csv_header(n);
    out.push('\n');
    for r in results {
        let full = r.runs.csv_rows();
        let mean_rows: String = full.lines().filter(|l| l.split(',').nth(1) == Some("mean")).map(|l| format!("{l}\n")).collect();
        out.push_str(&mean_rows);
    }
    out
}

fn method_json(r: &MethodRuns, names: &[String]) -> Value {
    let first = &r.runs.runs[0].manifest;
    let runs: Vec<Value> = r
        .runs
        .runs
        .iter()
        .map(|run| {
            json!({
                "seed": run.manifest.seed,
                "final_theta": run.final_theta,
                "final_probs": run.final_probs,
                "ranking": named(&run.ranking, names),
            })
        })
        .collect();
    json!({
        "method": first.method,
        "loss": first.loss,
        "label_table": first.label_table,
        "dataset_digest": first.dataset_digest,
        "helpful_digest": first.helpful_digest,
        "runs": runs,
        "mean_final_probs": r.runs.mean_final_probs(),
        "mean_ranking": named(&r.runs.mean_ranking(), names),
    })
}

fn manifest_json(cfg: &ExperimentConfig, results: &[MethodRuns], names: &[String]) -> Value {
    let wall: serde_json::Map<String, Value> = results
        .iter()
        .map(|r| (r.runs.runs[0].manifest.method.clone(), json!(r.runs.runs.iter().map(|x| x.wall_clock_seconds).collect::<Vec<_>>())))
        .collect();
    json!({
        "experiment": cfg,
        "train": cfg.train,
        "rng": RNG_SCHEMA,
        "methods": results.iter().map(|r| method_json(r, names)).collect::<Vec<_>>(),
        "wall_clock_seconds": wall,
    })
}

fn write_run_dir(dir: &Path, cfg: &ExperimentConfig, results: &[MethodRuns]) -> anyhow::Result<()> {
    let n = cfg.truth()?.n();
    let names = labels(n);
    write_atomic(&dir.join("curves.csv"), curves_csv(results, n).as_bytes())?;
    write_atomic(&dir.join("mean.csv"), mean_csv(results, n).as_bytes())?;
    write_json(&dir.join("manifest.json"), &manifest_json(cfg, results, &names))?;
    Ok(())
}

pub fn train(g: &Globals, config: &Path, method: Option<Vec<Method>>) -> CmdResult {
    let cfg = ExperimentConfig::load(config)?;
    let methods = method.unwrap_or_else(|| cfg.methods.clone());
    if methods.is_empty() {
        return Err(anyhow!("no methods selected").into());
    }
    let dir = out_dir(g, Some(&cfg));
    let results = run_methods(g, &cfg, &methods)?;
    write_run_dir(&dir, &cfg, &results)?;
    g.note(format!("wrote {}", dir.display()));
    Ok(())
}

pub fn audit(g: &Globals, config: &Path, expect_pass: bool, n_theta: Option<usize>) -> CmdResult {
    let cfg = ExperimentConfig::load(config)?;
    let inputs = cfg.audit_inputs()?;
    let report = audit_equivalence(&inputs, n_theta.unwrap_or(cfg.audit.n_theta), g.seed.unwrap_or(0), cfg.audit.tol).map_err(anyhow::Error::from)?;
    let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    println!("{text}");
    if let Some(dir) = &g.out {
        write_atomic(&dir.join("audit.json"), format!("{text}\n").as_bytes())?;
    }
    if expect_pass && !report.passed() {
        return Err(Failure::Verdict(format!(
            "audit failed: gradient_gap {:.3e}, objective gap stddev {:.3e}, tol {:.1e}",
            report.gradient_gap, report.objective_gap_stats.stddev, report.tolerance
        )));
    }
    Ok(())
}

fn claimed(method: Method) -> Vec<usize> {
    match method {
        Method::Bfpo => vec![0, 2, 3, 1],
        Method::Dpo | Method::Ipo => vec![0, 1, 2, 3],
    }
}

pub fn reproduce_fig4(g: &Globals) -> CmdResult {
    let cfg = ExperimentConfig::illustrative(5);
    let dir = out_dir(g, None);
    let results = run_methods(g, &cfg, &cfg.methods)?;
    write_run_dir(&dir, &cfg, &results)?;
    let names = labels(4);
    let mut summary = serde_json::Map::new();
    summary.insert("tau".into(), json!(cfg.tau));
    summary.insert("label".into(), json!(cfg.label));
    summary.insert("train".into(), json!(cfg.train));
    summary.insert("n_runs".into(), json!(cfg.n_runs));
    for r in &results {
        let name = r.runs.runs[0].manifest.method.clone();
        let steps: Vec<usize> = r.runs.mean.iter().map(|s| s.step).collect();
        let series: Vec<Vec<f64>> = (0..4).map(|a| r.runs.mean.iter().map(|s| s.probs[a]).collect()).collect();
        let title = format!("{}: mean action probabilities over {} seeds", name.to_uppercase(), cfg.n_runs);
        write_atomic(&dir.join(format!("fig4_{name}.svg")), probability_plot(&title, &steps, &series, &names).as_bytes())?;
        let ranking = r.runs.mean_ranking();
        let max_per_seed: Vec<f64> = r.runs.runs.iter().map(|x| x.final_probs.iter().copied().fold(0.0, f64::max)).collect();
        summary.insert(
            name,
            json!({
                "mean_final_probs": r.runs.mean_final_probs(),
                "ranking": named(&ranking, &names),
                "claimed_ranking": named(&claimed(r.method), &names),
                "matches_claim": ranking == claimed(r.method),
                "max_final_prob_per_seed": max_per_seed,
            }),
        );
    }
    write_json(&dir.join("summary.json"), &Value::Object(summary))?;
    g.note(format!("wrote {}", dir.display()));
    Ok(())
}

fn value_label(v: f64) -> String {
    format!("{v}")
}

pub fn sweep(g: &Globals, config: &Path, param: SweepParam, values: &[f64]) -> CmdResult {
    let cfg = ExperimentConfig::load(config)?;
    if values.is_empty() {
        return Err(anyhow!("--values must list at least one value").into());
    }
    let pname = match param {
        SweepParam::Tau => "tau",
        SweepParam::Alpha => "alpha",
    };
    let variants = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match param {
                SweepParam::Tau => c.tau = v,
                SweepParam::Alpha => match c.label {
                    LabelSpec::Canonical { .. } => c.label = LabelSpec::Canonical { alpha: v },
                    LabelSpec::General { .. } => bail!("an alpha sweep needs the canonical label form"),
                },
            }
            c.validate().with_context(|| format!("{pname} = {v}"))?;
            Ok((v, c))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let dir = out_dir(g, Some(&cfg));
    let outcomes: Vec<anyhow::Result<Vec<MethodRuns>>> = std::thread::scope(|s| {
        let handles: Vec<_> = variants.iter().map(|(_, c)| s.spawn(move || run_methods(g, c, &c.methods))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("sweep worker panicked")))).collect()
    });

    let n = cfg.truth()?.n();
    let names = labels(n);
    let mut agg = String::from("param,value,method,ranking");
    for i in 0..n {
        agg.push_str(&format!(",p_{i}"));
    }
    agg.push('\n');
    for ((v, c), outcome) in variants.iter().zip(outcomes) {
        let results = outcome?;
        write_run_dir(&dir.join(format!("{pname}_{}", value_label(*v))), c, &results)?;
        for r in &results {
            let probs = r.runs.mean_final_probs();
            agg.push_str(&format!("{pname},{},{},{}", value_label(*v), r.runs.runs[0].manifest.method, named(&r.runs.mean_ranking(), &names).join(">")));
            for p in probs {
                agg.push_str(&format!(",{p}"));
            }
            agg.push('\n');
        }
    }
    write_atomic(&dir.join("sweep.csv"), agg.as_bytes())?;
    g.note(format!("wrote {}", dir.display()));
    Ok(())
}
