//! Oracles, fixtures and scripted scenarios shared by the integration and
//! acceptance tests. Everything here is written independently of the
//! library's own algorithms.
#![allow(dead_code)]

use std::collections::BTreeMap;

use lectern::gateway::{ChatRequest, GatewayError, RetryPolicy, ScriptRule, ScriptedBackend};
use lectern::Gateway;
use rand::rngs::StdRng;
use rand::Rng;

pub const PUBLISHED_ACCURACY: &str = include_str!("../data/published_accuracy.csv");

pub const BACKBONES: [&str; 7] = [
    "gpt-4o",
    "gpt-4.1",
    "deepseek-r1",
    "o3",
    "o4-mini",
    "gemini-2.5-pro",
    "llama-3.1-70b",
];

pub const DOMAINS: [&str; 5] = [
    "physics",
    "public-health",
    "earth-science",
    "engineering",
    "material-science",
];

/// (method, domain, backbone) → accuracy in percent.
pub fn published_accuracy() -> BTreeMap<(String, String, String), f64> {
    PUBLISHED_ACCURACY
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            let acc: f64 = cells[3].parse().expect("numeric accuracy");
            (
                (
                    cells[0].to_string(),
                    cells[1].to_string(),
                    cells[2].to_string(),
                ),
                acc,
            )
        })
        .collect()
}

pub fn published_methods() -> Vec<String> {
    let mut methods: Vec<String> = Vec::new();
    for line in PUBLISHED_ACCURACY.lines().skip(1) {
        let method = line.split(',').next().unwrap().to_string();
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    methods
}

/// Paired differences (ours − baseline) over domains × backbones.
pub fn published_deltas(baseline: &str) -> Vec<f64> {
    let table = published_accuracy();
    let mut deltas = Vec::new();
    for domain in DOMAINS {
        for backbone in BACKBONES {
            let key = |m: &str| (m.to_string(), domain.to_string(), backbone.to_string());
            deltas.push(table[&key("ours")] - table[&key(baseline)]);
        }
    }
    deltas
}

pub fn immediate(gateway: Gateway) -> Gateway {
    gateway.with_retry(RetryPolicy::immediate())
}

// ---------------------------------------------------------------------------
// Hierarchy

#[derive(Debug, Clone)]
pub struct SyntheticDoc {
    pub markdown: String,
    pub headings: Vec<String>,
    pub bodies: Vec<String>,
    pub parents: Vec<Option<usize>>,
}

/// Random document of `3..=15` sections forming a forest of depth ≤ 3, with
/// every heading at a single `#` level (so structure is not visible from the
/// Markdown) and some bodies left empty.
pub fn synthetic_document(rng: &mut StdRng) -> SyntheticDoc {
    let n = rng.gen_range(3..=15);
    let mut parents = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut chain: Vec<usize> = Vec::new();
    for i in 0..n {
        // choose how many of the current ancestors to keep
        let keep = if chain.is_empty() {
            0
        } else {
            rng.gen_range(0..=chain.len())
        };
        chain.truncate(keep.min(2));
        let parent = chain.last().copied();
        parents.push(parent);
        depth.push(chain.len());
        chain.push(i);
    }
    let mut counters = [0usize; 3];
    let mut headings = Vec::with_capacity(n);
    for (i, &d) in depth.iter().enumerate() {
        counters[d] += 1;
        for c in counters.iter_mut().skip(d + 1) {
            *c = 0;
        }
        let number: Vec<String> = counters[..=d].iter().map(|c| c.to_string()).collect();
        headings.push(format!(
            "{}. Topic {} part {}",
            number.join("."),
            i,
            rng.gen_range(100..999)
        ));
    }
    let bodies: Vec<String> = (0..n)
        .map(|i| {
            if rng.gen_bool(0.35) {
                String::new()
            } else {
                format!(
                    "Body of section {i}. It has {} words.",
                    rng.gen_range(3..40)
                )
            }
        })
        .collect();
    let mut markdown = String::new();
    for i in 0..n {
        markdown.push_str(&format!("# {}\n", headings[i]));
        if !bodies[i].is_empty() {
            markdown.push_str(&bodies[i]);
            markdown.push('\n');
        }
    }
    SyntheticDoc {
        markdown,
        headings,
        bodies,
        parents,
    }
}

/// A tree-inference reply listing every root-to-node path.
pub fn hierarchy_reply(headings: &[String], parents: &[Option<usize>]) -> String {
    (0..headings.len())
        .map(|i| {
            let mut path = vec![headings[i].as_str()];
            let mut cur = parents[i];
            while let Some(p) = cur {
                path.push(&headings[p]);
                cur = parents[p];
            }
            path.reverse();
            path.join(" > ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Direct application of the keep/compose rule: a node is dropped when its
/// body is blank and it has children; every kept node is labeled with the
/// run of dropped ancestors directly above it, joined with " - ".
pub fn oracle_prune(
    headings: &[String],
    bodies: &[String],
    parents: &[Option<usize>],
) -> Vec<(String, usize)> {
    let n = headings.len();
    let has_child = |i: usize| parents.contains(&Some(i));
    let dropped = |i: usize| bodies[i].trim().is_empty() && has_child(i);
    let mut out = Vec::new();
    for i in 0..n {
        if dropped(i) {
            continue;
        }
        let mut parts = vec![headings[i].clone()];
        let mut cur = parents[i];
        while let Some(p) = cur {
            if !dropped(p) {
                break;
            }
            parts.push(headings[p].clone());
            cur = parents[p];
        }
        parts.reverse();
        out.push((parts.join(" - "), i));
    }
    out
}

// ---------------------------------------------------------------------------
// Ranking

/// Checks `order` contains each of 1..=n exactly once, by sorting.
pub fn is_permutation(order: &[usize], n: usize) -> bool {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    sorted == (1..=n).collect::<Vec<_>>()
}

// ---------------------------------------------------------------------------
// Statistics

/// One-sided signed-rank p-value by enumerating every sign assignment.
/// Ties get midranks; zeros are dropped.
pub fn wilcoxon_enumerate(deltas: &[f64]) -> f64 {
    let nonzero: Vec<f64> = deltas.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    let ranks: Vec<f64> = nonzero
        .iter()
        .map(|d| {
            let below = nonzero.iter().filter(|x| x.abs() < d.abs()).count() as f64;
            let equal = nonzero.iter().filter(|x| x.abs() == d.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let mut hits = 0u64;
    for mask in 0u64..(1u64 << n) {
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

// ---------------------------------------------------------------------------
// Retrieval

pub fn brute_force_topk(vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<usize> {
    let norm = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let q = norm(query);
    let mut all: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v
                .iter()
                .zip(query)
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum();
            (i, dot / (norm(v) * q))
        })
        .collect();
    // stable sort keeps lower ids first among equal scores
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    all.into_iter().take(k).map(|(i, _)| i).collect()
}

// ---------------------------------------------------------------------------
// Reading-loop scenarios

/// Flat paper with `n` sections `S1..Sn`, each stating one fact.
pub fn flat_paper(n: usize) -> String {
    let mut md = String::from("Preamble text.\n");
    for k in 1..=n {
        md.push_str(&format!("# S{k}\nFact {k} is here. Filler sentence {k}.\n"));
    }
    md
}

fn count_details(prompt: &str) -> usize {
    prompt.matches("Source sentence:").count()
}

fn section_number(prompt: &str) -> Option<usize> {
    let start = prompt.find("Section: S")? + "Section: S".len();
    let digits: String = prompt[start..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse().ok()
}

/// Backend for [`flat_paper`]: flat hierarchy, identity ranking, one
/// verbatim detail per section, synthesis echoing the detail count, and a
/// sufficiency verdict decided by `verdict(prompt_id, details_so_far)`.
pub fn loop_backend(
    n: usize,
    verdict: impl Fn(&str, usize) -> bool + Send + Sync + 'static,
) -> ScriptedBackend {
    ScriptedBackend::new(move |req: &ChatRequest| -> Result<String, GatewayError> {
        let reply = match req.prompt_id.as_str() {
            "hierarchy" => (1..=n)
                .map(|k| format!("S{k}"))
                .collect::<Vec<_>>()
                .join("\n"),
            "rank" => (1..=n)
                .map(|k| format!("{k}. S{k} — in order"))
                .collect::<Vec<_>>()
                .join("\n"),
            "get-detail" => {
                let k = section_number(&req.rendered_prompt).expect("section in prompt");
                format!(r#"[{{"fact": "fact {k}", "sentence": "Fact {k} is here."}}]"#)
            }
            "synthesize" => format!(
                "answer from {} details",
                count_details(&req.rendered_prompt)
            ),
            id if id.starts_with("sufficiency-") => {
                if verdict(id, count_details(&req.rendered_prompt)) {
                    "Enough evidence.\nYES".to_string()
                } else {
                    "Not yet.\nNO".to_string()
                }
            }
            other => return Err(GatewayError::NoScriptedResponse(other.to_string())),
        };
        Ok(reply)
    })
}

/// Verdict policy keyed on the prompt variant: aggressive accepts one
/// detail, balanced two, conservative six.
pub fn confidence_policy(prompt_id: &str, details: usize) -> bool {
    let needed = match prompt_id {
        "sufficiency-3" => 1,
        "sufficiency-2" => 2,
        _ => 6,
    };
    details >= needed
}

// ---------------------------------------------------------------------------
// Fabrication fixture

/// A paper whose wavelength is 785 nm, and a backend that claims 532 nm
/// with a sentence that does not occur in the paper.
pub const WAVELENGTH_PAPER: &str = "\
# Surface-enhanced Raman detection of bacteria
Short abstract.
# 1. Introduction
Raman spectroscopy is label free. SERS boosts weak signals.
# 2. Experiment Setup - SERS measurement
Spectra were acquired with a 785 nm excitation laser at 10 mW. Each spectrum was averaged over 5 s.
# 3. Results
The enhancement factor reached 10^6. Fig. 3 shows the spectra.
";

pub fn fabricating_backend() -> ScriptedBackend {
    ScriptedBackend::from_rules(
        vec![
            rule("hierarchy", None, "Surface-enhanced Raman detection of bacteria\nSurface-enhanced Raman detection of bacteria > 1. Introduction\nSurface-enhanced Raman detection of bacteria > 2. Experiment Setup - SERS measurement\nSurface-enhanced Raman detection of bacteria > 3. Results"),
            rule("rank", None, "1. 2. Experiment Setup - SERS measurement — laser settings\n2. 3. Results — spectra\n3. 1. Introduction — background"),
            rule(
                "get-detail",
                None,
                r#"[{"fact": "532 nm excitation", "sentence": "The excitation wavelength was confirmed to be 532 nm."}]"#,
            ),
            rule("synthesize", None, "532 nm"),
        ],
        Some("NO".to_string()),
    )
}

/// Honest counterpart of [`fabricating_backend`].
pub fn honest_backend() -> ScriptedBackend {
    ScriptedBackend::from_rules(
        vec![
            rule("hierarchy", None, "Surface-enhanced Raman detection of bacteria\nSurface-enhanced Raman detection of bacteria > 1. Introduction\nSurface-enhanced Raman detection of bacteria > 2. Experiment Setup - SERS measurement\nSurface-enhanced Raman detection of bacteria > 3. Results"),
            rule("rank", None, "1. 2. Experiment Setup - SERS measurement — laser settings\n2. 3. Results — spectra\n3. 1. Introduction — background"),
            rule(
                "get-detail",
                Some("Section: 2. Experiment Setup"),
                r#"[{"fact": "785 nm excitation laser", "sentence": "Spectra were acquired with a 785 nm excitation laser at 10 mW."}]"#,
            ),
            rule("get-detail", None, "[]"),
            rule("synthesize", None, "785 nm"),
        ],
        Some("The 785 nm detail answers it.\nYES".to_string()),
    )
}

pub fn rule(prompt_id: &str, contains: Option<&str>, response: &str) -> ScriptRule {
    ScriptRule {
        prompt_id: Some(prompt_id.to_string()),
        contains: contains.map(str::to_string),
        response: response.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Benchmark fixtures

pub const MAPPING_CASES: &str = include_str!("../data/mapping_cases.json");

#[derive(Debug, Clone, serde::Deserialize)]
pub struct MappingCase {
    pub id: String,
    pub question: String,
    pub choices: BTreeMap<String, String>,
    pub answer: String,
    pub gold: String,
    pub expected_label: String,
    pub expected_fallback: bool,
    pub expected_correct: bool,
}

pub fn mapping_cases() -> Vec<MappingCase> {
    serde_json::from_str(MAPPING_CASES).expect("mapping fixture parses")
}

/// Benchmark item JSON for one mapping case.
pub fn mapping_item(case: &MappingCase) -> serde_json::Value {
    serde_json::json!({
        "id": case.id,
        "domain": "physics",
        "category": "subject-and-setup",
        "paper_id": "none",
        "question": case.question,
        "choices": case.choices,
        "gold": case.gold,
    })
}

const SYNONYMS: &[(&str, &str)] = &[
    ("agnp", "silver nanoparticle"),
    ("aunp", "gold nanoparticle"),
    ("r0", "basic reproduction number"),
    ("dft", "density functional theory"),
    ("xrd", "x ray diffraction"),
    ("sem", "scanning electron microscopy"),
    ("co2", "carbon dioxide"),
    ("n2o", "nitrous oxide"),
];

fn normalize(text: &str) -> String {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let expanded: Vec<String> = cleaned
        .split_whitespace()
        .map(|w| {
            SYNONYMS
                .iter()
                .find(|(short, _)| *short == w)
                .map_or_else(|| w.to_string(), |(_, long)| long.to_string())
        })
        .collect();
    // split glued numbers and units, e.g. "785nm"
    let mut out = String::new();
    let mut prev: Option<char> = None;
    for c in expanded.join(" ").chars() {
        if let Some(p) = prev {
            if p.is_ascii_digit() && c.is_alphabetic() {
                out.push(' ');
            }
        }
        out.push(c);
        prev = Some(c);
    }
    out
}

/// A mapping model that knows a handful of abbreviations. It picks the
/// choice whose normalized text the answer contains; an answer naming all
/// four content choices maps to "All of the above"; anything else is NONE.
pub fn synonym_mapper() -> ScriptedBackend {
    ScriptedBackend::new(|req: &ChatRequest| -> Result<String, GatewayError> {
        let prompt = &req.rendered_prompt;
        let answer = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Short answer: "))
            .unwrap_or("");
        let choices: Vec<(String, String)> = prompt
            .split("Choices:\n")
            .nth(1)
            .unwrap_or("")
            .lines()
            .take_while(|l| !l.trim().is_empty())
            .filter_map(|l| l.split_once(". "))
            .map(|(letter, text)| (letter.to_string(), text.to_string()))
            .collect();
        let padded = format!(" {} ", normalize(answer));
        let content: Vec<&(String, String)> = choices
            .iter()
            .filter(|(_, text)| !text.ends_with("of the above"))
            .collect();
        let hits: Vec<&String> = content
            .iter()
            .filter(|(_, text)| padded.contains(&format!(" {} ", normalize(text))))
            .map(|(letter, _)| letter)
            .collect();
        let reply = match hits.len() {
            1 => hits[0].clone(),
            n if n > 1 && n == content.len() => choices
                .iter()
                .find(|(_, t)| t == "All of the above")
                .map_or("NONE".to_string(), |(l, _)| l.clone()),
            _ => "NONE".to_string(),
        };
        Ok(reply)
    })
}

/// Fixture directory shared by the core and cli test targets.
pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

pub fn bench6_dir() -> std::path::PathBuf {
    data_dir().join("bench6")
}

/// Benchmark JSON with the given number of items per domain, in
/// [`DOMAINS`] order.
pub fn synthetic_benchmark(per_domain: &[usize; 5]) -> String {
    let categories = [
        "subject-and-setup",
        "data-and-collection",
        "approach-and-details",
        "conclusions-and-results",
    ];
    let mut items = Vec::new();
    for (d, domain) in DOMAINS.iter().enumerate() {
        for k in 0..per_domain[d] {
            let gold = ["A", "B", "C", "D", "E", "F"][k % 6];
            items.push(serde_json::json!({
                "id": format!("{domain}-{k:03}"),
                "domain": domain,
                "category": categories[k % 4],
                "paper_id": format!("{domain}-paper-{}", k % 13),
                "question": format!("Question {k} about {domain}?"),
                "choices": {
                    "A": format!("option a{k}"),
                    "B": format!("option b{k}"),
                    "C": format!("option c{k}"),
                    "D": format!("option d{k}"),
                    "E": "All of the above",
                    "F": "None of the above",
                },
                "gold": gold,
            }));
        }
    }
    serde_json::to_string_pretty(&items).unwrap()
}

/// Published macro accuracy of "ours" per backbone, in [`BACKBONES`] order.
pub const PUBLISHED_MACRO: [f64; 7] = [70.0, 75.8, 74.4, 73.4, 73.8, 75.9, 68.8];

/// Published (baseline, median delta, raw p, adjusted p) rows of the
/// significance table.
pub const PUBLISHED_SIGNIFICANCE: [(&str, f64, f64, f64); 12] = [
    ("Vanilla RAG all-MiniLM-L6-v2", 11.7, 2.9e-11, 3.5e-10),
    ("Vanilla RAG E5-mistral-7b-instruct", 10.9, 2.9e-11, 3.5e-10),
    ("Vanilla RAG GritLM-7B", 11.7, 2.9e-11, 3.5e-10),
    (
        "Context. RAG E5-mistral-7b-instruct",
        12.8,
        2.9e-11,
        3.5e-10,
    ),
    ("Context. RAG GritLM-7B", 12.9, 5.8e-11, 3.5e-10),
    ("DRAGIN", 27.3, 2.9e-11, 3.5e-10),
    ("R2AG", 16.8, 2.9e-11, 3.5e-10),
    ("LongRAG", 12.3, 2.9e-11, 3.5e-10),
    ("LUMOS", 18.5, 2.9e-11, 3.5e-10),
    ("PaperQA2", 21.8, 2.9e-11, 3.5e-10),
    ("Agentic-Hybrid-RAG", 14.1, 2.9e-11, 3.5e-10),
    ("SciMaster", 14.6, 1.8e-7, 1.8e-7),
];

/// Relative agreement at the two significant digits the table prints.
pub fn same_two_digits(got: f64, published: f64) -> bool {
    format!("{got:.1e}") == format!("{published:.1e}")
}

const KEYWORDS: [&str; 12] = [
    "excitation",
    "wavelength",
    "laser",
    "nm",
    "raman",
    "sers",
    "bacteria",
    "spectra",
    "enhancement",
    "power",
    "signals",
    "results",
];

/// Keyword-count embedding with a small constant component so no text
/// maps to the zero vector.
pub fn keyword_embedding(text: &str) -> Vec<f32> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut v: Vec<f32> = KEYWORDS
        .iter()
        .map(|k| words.iter().filter(|w| w == k).count() as f32)
        .collect();
    v.push(0.1);
    v
}

pub fn keyword_backend() -> ScriptedBackend {
    ScriptedBackend::fixed("unused").with_embedder(|req| Ok(keyword_embedding(&req.text)))
}

/// JSON script equivalent of [`loop_backend`] over [`flat_paper`]`(n)`
/// with [`confidence_policy`] verdicts, for runs driven through files.
pub fn flat_confidence_script(n: usize) -> serde_json::Value {
    let mut rules = vec![
        serde_json::json!({
            "prompt_id": "hierarchy",
            "response": (1..=n).map(|k| format!("S{k}")).collect::<Vec<_>>().join("\n"),
        }),
        serde_json::json!({
            "prompt_id": "rank",
            "response": (1..=n).map(|k| format!("{k}. S{k} — in order")).collect::<Vec<_>>().join("\n"),
        }),
    ];
    for k in 1..=n {
        rules.push(serde_json::json!({
            "prompt_id": "get-detail",
            "contains": format!("Section: S{k}\n"),
            "response": format!(r#"[{{"fact": "fact {k}", "sentence": "Fact {k} is here."}}]"#),
        }));
    }
    // the k-th detail's sentence is present once k sections have been read
    for (prompt_id, needed) in [
        ("sufficiency-1", 6),
        ("sufficiency-2", 2),
        ("sufficiency-3", 1),
    ] {
        rules.push(serde_json::json!({
            "prompt_id": prompt_id,
            "contains": format!("\"Fact {needed} is here.\""),
            "response": "Enough evidence.\nYES",
        }));
    }
    rules.push(serde_json::json!({"prompt_id": "synthesize", "response": "answer from the facts"}));
    serde_json::json!({"rules": rules, "default": "Not yet.\nNO"})
}
