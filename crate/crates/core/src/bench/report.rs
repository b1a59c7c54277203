//! CSV and Markdown renderings of a score report (accuracies in percent).

use super::ScoreReport;

fn rows(report: &ScoreReport) -> Vec<[String; 4]> {
    let mut rows: Vec<[String; 4]> = report
        .per_domain_accuracy
        .iter()
        .map(|(domain, accuracy)| {
            let (correct, total) = report
                .counts
                .get(domain)
                .map_or((String::new(), String::new()), |c| {
                    (c.correct.to_string(), c.total.to_string())
                });
            [
                domain.to_string(),
                correct,
                total,
                format!("{:.1}", accuracy * 100.0),
            ]
        })
        .collect();
    let (correct, total) = if report.counts.is_empty() {
        (String::new(), String::new())
    } else {
        let correct: usize = report.counts.values().map(|c| c.correct).sum();
        let total: usize = report.counts.values().map(|c| c.total).sum();
        (correct.to_string(), total.to_string())
    };
    rows.push([
        "macro".to_string(),
        correct,
        total,
        format!("{:.1}", report.macro_accuracy * 100.0),
    ]);
    rows
}

pub fn report_csv(report: &ScoreReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["domain", "correct", "total", "accuracy"])
        .expect("in-memory write");
    for row in rows(report) {
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn report_markdown(report: &ScoreReport) -> String {
    let mut out =
        String::from("| domain | correct | total | accuracy (%) |\n|---|---:|---:|---:|\n");
    for [domain, correct, total, accuracy] in rows(report) {
        let domain = if domain == "macro" {
            "**macro**".to_string()
        } else {
            domain
        };
        out.push_str(&format!(
            "| {domain} | {correct} | {total} | {accuracy} |\n"
        ));
    }
    out.push_str(&format!(
        "\nfallback rate: {:.1}%\n",
        report.fallback_rate * 100.0
    ));
    out
}
