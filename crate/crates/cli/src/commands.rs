//! One function per subcommand. Each prints its human-readable output to
//! stdout and writes files only to paths named on the command line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lectern::bench::{
    load_benchmark, load_results, paired_family, remap_results, report_csv, report_markdown,
    results_to_json, run_benchmark, score, BenchConfig, BenchError, BenchItem, FamilyRow,
    ItemResult, ScoreReport, StatsError,
};
use lectern::document::{load_paper, DocumentError};
use lectern::rag::{run_rag, RagConfig, RagError};
use lectern::reader::PipelineConfig;
use lectern::{run_pipeline, Document, Gateway, Query};

use crate::config::Registry;
use crate::error::{Classify, CliError, FailureKind};
use crate::{GlobalArgs, ReportFormat};

fn registry(global: &GlobalArgs) -> Result<Registry, CliError> {
    Registry::load(&global.config)
}

fn backbone_name(global: &GlobalArgs, registry: &Registry) -> Result<String, CliError> {
    global
        .backbone
        .clone()
        .or_else(|| registry.defaults.backbone.clone())
        .ok_or_else(|| CliError::usage("no backbone: pass --backbone or set [defaults] backbone"))
}

fn mapper_name(global: &GlobalArgs, registry: &Registry) -> Result<String, CliError> {
    match global
        .mapper
        .clone()
        .or_else(|| registry.defaults.mapper.clone())
    {
        Some(name) => Ok(name),
        None => {
            let name = backbone_name(global, registry)?;
            tracing::info!("no mapper configured; mapping with backbone `{name}`");
            Ok(name)
        }
    }
}

fn pipeline_config(global: &GlobalArgs, sufficiency_check: bool) -> PipelineConfig {
    PipelineConfig {
        confidence: global.confidence.into(),
        max_iterations: global.max_iterations,
        sufficiency_check,
    }
}

fn read_paper(path: &Path) -> Result<Document, CliError> {
    load_paper(path).map_err(|e| match e {
        DocumentError::ConverterMissing { .. } => CliError::new(FailureKind::Usage, e),
        other => CliError::new(FailureKind::Input, other),
    })
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn bench_failure(err: BenchError) -> CliError {
    CliError::new(FailureKind::Input, err)
}

pub fn ask(
    global: &GlobalArgs,
    paper: &Path,
    question: &str,
    sufficiency_check: bool,
    json: bool,
) -> Result<(), CliError> {
    let doc = read_paper(paper)?;
    let query = Query::new(question).or_input()?;
    let registry = registry(global)?;
    let gateway = registry.gateway(&backbone_name(global, &registry)?)?;
    let config = pipeline_config(global, sufficiency_check);

    let (answer, trace) = run_pipeline(&doc, &query, &config, &gateway).or_input()?;
    let trace_path = global.trace_dir.join(format!("{}.jsonl", trace.run_id));
    write_output(&trace_path, &trace.to_jsonl())?;

    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&answer).expect("answer serializes")
        );
    } else {
        println!("answer: {}", answer.text);
        println!("iterations: {}", answer.iterations);
        if answer.supporting.is_empty() {
            println!("supporting: none");
        } else {
            println!("supporting:");
            for detail in &answer.supporting {
                println!("  [{}] {}", detail.section_label, detail.anchor_sentence);
            }
        }
        println!("trace: {}", trace_path.display());
    }
    match answer.error {
        Some(error) => Err(CliError::new(
            FailureKind::Backend,
            anyhow::anyhow!("answer synthesis failed: {error}"),
        )),
        None => Ok(()),
    }
}

fn emit_report(report: &ScoreReport, path: Option<&Path>) -> Result<(), CliError> {
    print!("{}", report_markdown(report));
    if let Some(path) = path {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let body = if is_csv {
            report_csv(report)
        } else {
            report_markdown(report)
        };
        write_output(path, &body)?;
    }
    Ok(())
}

pub fn bench(
    global: &GlobalArgs,
    dataset: &Path,
    papers: &Path,
    out: &Path,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let items = load_benchmark(dataset).map_err(bench_failure)?;
    if !papers.is_dir() {
        return Err(CliError::input(format!(
            "papers directory {} does not exist",
            papers.display()
        )));
    }
    let registry = registry(global)?;
    let backbone = registry.gateway(&backbone_name(global, &registry)?)?;
    let mapper = registry.gateway(&mapper_name(global, &registry)?)?;
    let config = BenchConfig {
        pipeline: pipeline_config(global, true),
        workers: global.workers as usize,
        trace_dir: Some(global.trace_dir.clone()),
    };
    let outcome =
        run_benchmark(&items, papers, &config, &backbone, &mapper).map_err(bench_failure)?;
    write_output(out, &results_to_json(&outcome.results))?;
    emit_report(&outcome.report, report)
}

pub fn remap(
    global: &GlobalArgs,
    dataset: &Path,
    from: &Path,
    out: &Path,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let items = load_benchmark(dataset).map_err(bench_failure)?;
    let previous = load_results(from).map_err(bench_failure)?;
    let registry = registry(global)?;
    let mapper = registry.gateway(&mapper_name(global, &registry)?)?;
    let (results, score_report) =
        remap_results(&previous, &items, &mapper).map_err(bench_failure)?;
    write_output(out, &results_to_json(&results))?;
    emit_report(&score_report, report)
}

/// Scores keyed by item id (results JSON, 1 for correct and 0 otherwise)
/// or by the `key` column of a CSV with an `accuracy` column.
pub fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        let results: Vec<ItemResult> = load_results(path).map_err(bench_failure)?;
        let mut scores = BTreeMap::new();
        for r in results {
            if scores
                .insert(r.id.clone(), f64::from(u8::from(r.correct)))
                .is_some()
            {
                return Err(CliError::input(format!(
                    "{}: duplicate id `{}`",
                    path.display(),
                    r.id
                )));
            }
        }
        return Ok(scores);
    }
    let bad = |message: String| CliError::input(format!("{}: {message}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing `{name}` column")))
    };
    let (key_col, acc_col) = (column("key")?, column("accuracy")?);
    let mut scores = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let key = record.get(key_col).unwrap_or_default().trim().to_string();
        let raw = record.get(acc_col).unwrap_or_default().trim();
        let value: f64 = raw.parse().map_err(|_| {
            bad(format!(
                "row {}: accuracy `{raw}` is not a number",
                line + 2
            ))
        })?;
        if scores.insert(key.clone(), value).is_some() {
            return Err(bad(format!("duplicate key `{key}`")));
        }
    }
    Ok(scores)
}

fn paired_deltas(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
    b_path: &Path,
) -> Result<Vec<f64>, CliError> {
    let only_a: Vec<&String> = a.keys().filter(|k| !b.contains_key(*k)).collect();
    let only_b: Vec<&String> = b.keys().filter(|k| !a.contains_key(*k)).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        let first = only_a.first().or(only_b.first()).expect("one side differs");
        return Err(CliError::input(format!(
            "{}: item sets differ ({} only in A, {} only in B; e.g. `{first}`)",
            b_path.display(),
            only_a.len(),
            only_b.len()
        )));
    }
    Ok(a.iter().map(|(k, va)| va - b[k]).collect())
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn stats(a: &Path, bs: &[std::path::PathBuf]) -> Result<(), CliError> {
    let scores_a = read_scores(a)?;
    let mut rows = Vec::with_capacity(bs.len());
    for b in bs {
        let deltas = paired_deltas(&scores_a, &read_scores(b)?, b)?;
        rows.push((label_of(b), deltas));
    }
    println!(
        "A = {} (one-sided: A > B, Holm-adjusted over {} comparisons)",
        label_of(a),
        rows.len()
    );
    let width = rows
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max("baseline".len());
    println!(
        "{:<width$}  {:>5}  {:>9}  {:>8}  {:>8}",
        "baseline", "pairs", "median Δ", "p_raw", "p_adj"
    );
    for row in paired_family(&rows) {
        match row {
            FamilyRow::Tested(s) => println!(
                "{:<width$}  {:>5}  {:>+9.1}  {:>8.1e}  {:>8.1e}",
                s.label, s.n_pairs, s.median_delta, s.p_raw, s.p_adjusted
            ),
            FamilyRow::Untestable {
                label,
                n_pairs,
                median_delta,
                reason,
            } => {
                let note = match reason {
                    StatsError::AllZero => {
                        "degenerate: all paired differences are zero".to_string()
                    }
                    other => format!("not tested: {other}"),
                };
                let median = median_delta.map_or("-".to_string(), |m| format!("{m:+.1}"));
                println!("{label:<width$}  {n_pairs:>5}  {median:>9}  {note}");
            }
        }
    }
    Ok(())
}

pub fn rag(
    global: &GlobalArgs,
    paper: &Path,
    question: &str,
    config: &RagConfig,
    embed_backend: Option<&str>,
    index_out: Option<&Path>,
) -> Result<(), CliError> {
    let doc = read_paper(paper)?;
    let registry = registry(global)?;
    let backbone = backbone_name(global, &registry)?;
    let embed_name = embed_backend
        .map(str::to_string)
        .or_else(|| registry.defaults.embed_backend.clone())
        .unwrap_or_else(|| backbone.clone());
    let generator: Gateway = registry.gateway(&backbone)?;
    let embedder: Gateway = registry.gateway(&embed_name)?;

    let run =
        run_rag(&doc.raw_markdown, question, config, &embedder, &generator).map_err(
            |e| match e {
                RagError::Gateway(_) => CliError::new(FailureKind::Backend, e),
                RagError::BadChunking { .. } | RagError::ZeroK => {
                    CliError::new(FailureKind::Usage, e)
                }
                other => CliError::new(FailureKind::Input, other),
            },
        )?;
    if let Some(path) = index_out {
        run.index.save(path).or_input()?;
    }
    println!("answer: {}", run.answer.text);
    println!("chunks: {}", run.index.len());
    println!("retrieved:");
    for hit in &run.retrieved {
        let preview: String = hit.chunk.text.chars().take(80).collect();
        println!(
            "  #{} tokens {}..{} cosine {:.4}: {}",
            hit.chunk.chunk_id,
            hit.chunk.token_span.0,
            hit.chunk.token_span.1,
            hit.similarity,
            preview.replace('\n', " ")
        );
    }
    Ok(())
}

pub fn report(
    results: &Path,
    dataset: &Path,
    format: ReportFormat,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let items: Vec<BenchItem> = load_benchmark(dataset).map_err(bench_failure)?;
    let results = load_results(results).map_err(bench_failure)?;
    let mapped: Vec<_> = results.iter().map(|r| (r.id.clone(), r.mapped())).collect();
    let scored = score(&mapped, &items).map_err(bench_failure)?;
    let body = match format {
        ReportFormat::Csv => report_csv(&scored),
        ReportFormat::Markdown => report_markdown(&scored),
    };
    match out {
        Some(path) => write_output(path, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
