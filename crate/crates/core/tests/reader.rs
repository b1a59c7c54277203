mod support;

use std::sync::{Arc, Mutex};

use lectern::gateway::{Backend, RecordingBackend, ReplayBackend, ScriptedBackend};
use lectern::reader::NOT_FOUND_ANSWER;
use lectern::trace::Action;
use lectern::{
    parse_markdown, run_pipeline, ConfidenceLevel, Gateway, PipelineConfig, Query, Verdict,
};
use support::*;

fn run(
    markdown: &str,
    backend: ScriptedBackend,
    config: &PipelineConfig,
) -> (lectern::Answer, lectern::RunTrace) {
    let doc = parse_markdown(markdown, "paper").unwrap();
    let gateway = immediate(Gateway::new(backend, "scripted"));
    let query = Query::new("What excitation wavelength was used?").unwrap();
    run_pipeline(&doc, &query, config, &gateway).unwrap()
}

#[test]
fn always_no_reads_every_section() {
    for n in 1..=10 {
        let (answer, trace) = run(
            &flat_paper(n),
            loop_backend(n, |_, _| false),
            &PipelineConfig::default(),
        );
        assert_eq!(answer.iterations, n);
        assert_eq!(trace.count(Action::Check), n);
        assert_eq!(trace.count(Action::Synthesize), 1);
        assert_eq!(answer.text, format!("answer from {n} details"));
        assert_eq!(answer.supporting.len(), n);
    }
}

#[test]
fn stops_at_the_first_yes() {
    for n in 1..=10 {
        for k in 1..=n {
            let (answer, trace) = run(
                &flat_paper(n),
                loop_backend(n, move |_, d| d >= k),
                &PipelineConfig::default(),
            );
            assert_eq!(answer.iterations, k, "n={n} k={k}");
            let verdicts: Vec<_> = trace.records.iter().filter_map(|r| r.verdict).collect();
            assert_eq!(verdicts.len(), k);
            assert_eq!(verdicts.last(), Some(&Verdict::Yes));
        }
    }
}

#[test]
fn iteration_cap_bounds_the_loop() {
    let config = PipelineConfig {
        max_iterations: Some(3),
        ..PipelineConfig::default()
    };
    let (answer, _) = run(&flat_paper(8), loop_backend(8, |_, _| false), &config);
    assert_eq!(answer.iterations, 3);
}

#[test]
fn confidence_levels_order_reading_depth() {
    let depth = |level| {
        let config = PipelineConfig::default().with_confidence(level);
        run(&flat_paper(8), loop_backend(8, confidence_policy), &config)
            .0
            .iterations
    };
    let conservative = depth(ConfidenceLevel::Conservative);
    let balanced = depth(ConfidenceLevel::Balanced);
    let aggressive = depth(ConfidenceLevel::Aggressive);
    assert_eq!((conservative, balanced, aggressive), (6, 2, 1));
}

#[test]
fn sufficiency_sees_cumulative_memory() {
    let prompts = Arc::new(Mutex::new(Vec::new()));
    let log = prompts.clone();
    let inner = loop_backend(4, |_, _| false);
    let backend = ScriptedBackend::new(move |req| {
        if req.prompt_id.starts_with("sufficiency") {
            log.lock().unwrap().push(req.rendered_prompt.clone());
        }
        inner.complete(req).map(|r| r.text)
    });
    run(&flat_paper(4), backend, &PipelineConfig::default());
    let prompts = prompts.lock().unwrap();
    assert_eq!(prompts.len(), 4);
    for (k, prompt) in prompts.iter().enumerate() {
        for j in 1..=4 {
            assert_eq!(prompt.contains(&format!("Fact {j} is here.")), j <= k + 1);
        }
    }
}

#[test]
fn honest_run_is_grounded_and_stops_after_the_setup_section() {
    let (answer, trace) = run(
        WAVELENGTH_PAPER,
        honest_backend(),
        &PipelineConfig::default(),
    );
    assert_eq!(answer.text, "785 nm");
    assert_eq!(answer.iterations, 1);
    assert!(!answer.insufficient);
    assert!(answer.is_grounded_in(WAVELENGTH_PAPER));
    assert!(answer.supporting[0].anchor_sentence.contains("785 nm"));
    assert_eq!(
        answer.supporting[0].section_label,
        "2. Experiment Setup - SERS measurement"
    );
    assert_eq!(
        trace.actions(),
        vec![
            Action::Hierarchy,
            Action::Rank,
            Action::Access,
            Action::Extract,
            Action::Check,
            Action::Synthesize
        ]
    );
}

#[test]
fn fabricated_wavelength_is_blocked_by_the_gate() {
    let (answer, _) = run(
        WAVELENGTH_PAPER,
        fabricating_backend(),
        &PipelineConfig::default(),
    );
    assert!(answer.supporting.is_empty());
    assert!(answer.insufficient);
    assert_eq!(answer.text, NOT_FOUND_ANSWER);

    // Without the sufficiency gate the fabricated answer goes straight through.
    let ungated = PipelineConfig {
        sufficiency_check: false,
        ..PipelineConfig::default()
    };
    let (answer, _) = run(WAVELENGTH_PAPER, fabricating_backend(), &ungated);
    assert_eq!(answer.text, "532 nm");
    assert!(answer.supporting.is_empty());
}

#[test]
fn replayed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("run.jsonl");
    let doc = parse_markdown(WAVELENGTH_PAPER, "sers").unwrap();
    let query = Query::new("What excitation wavelength was used?").unwrap();
    let config = PipelineConfig::default();

    let inner: Arc<dyn Backend> = Arc::new(honest_backend());
    let recorder = Gateway::new(RecordingBackend::new(inner, &cassette).unwrap(), "scripted");
    let (recorded, recorded_trace) = run_pipeline(&doc, &query, &config, &recorder).unwrap();
    drop(recorder);

    let outputs: Vec<(String, String)> = (0..2)
        .map(|_| {
            let replay = Gateway::new(ReplayBackend::open(&cassette).unwrap(), "scripted");
            let (answer, trace) = run_pipeline(&doc, &query, &config, &replay).unwrap();
            (serde_json::to_string(&answer).unwrap(), trace.to_jsonl())
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].0, serde_json::to_string(&recorded).unwrap());
    assert_eq!(outputs[0].1, recorded_trace.to_jsonl());
}
