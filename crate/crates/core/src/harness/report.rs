//! Markdown tables in the layout of the accuracy and cost comparisons.

use std::fmt::Write as _;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use super::evaluate::MetricReport;
use crate::metrics::{effective_cost, CostBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportLayout {
    AccuracyTable,
    CostTable,
}

impl std::str::FromStr for ReportLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" | "accuracy-table" => Ok(ReportLayout::AccuracyTable),
            "cost" | "cost-table" => Ok(ReportLayout::CostTable),
            _ => Err(format!("unknown report layout {s:?}")),
        }
    }
}

fn sorted(reports: &[MetricReport]) -> Vec<&MetricReport> {
    let mut rows: Vec<&MetricReport> = reports.iter().collect();
    rows.sort_by(|a, b| (a.paradigm, &a.model).cmp(&(b.paradigm, &b.model)));
    rows
}

fn one_dp(v: Option<f64>) -> String {
    v.map_or_else(|| "–".to_string(), |v| format!("{v:.1}"))
}

fn group_thousands(int_part: &str) -> String {
    let (sign, digits) = int_part.strip_prefix('-').map_or(("", int_part), |d| ("-", d));
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    format!("{sign}{out}")
}

/// Rounds half away from zero to `dp` places and groups thousands. With
/// `drop_whole`, whole amounts are shown without decimals.
pub fn format_money(v: Decimal, dp: u32, drop_whole: bool) -> String {
    let r = v.round_dp_with_strategy(dp, RoundingStrategy::MidpointAwayFromZero);
    let text = if drop_whole && r.fract().is_zero() {
        r.trunc().normalize().to_string()
    } else {
        let mut r = r;
        r.rescale(dp);
        r.to_string()
    };
    match text.split_once('.') {
        Some((i, f)) => format!("{}.{f}", group_thousands(i)),
        None => group_thousands(&text),
    }
}

fn footnote_marker(i: usize) -> char {
    (b'a' + (i % 26) as u8) as char
}

fn accuracy_table(reports: &[MetricReport]) -> String {
    let rows = sorted(reports);
    let mut notes: Vec<&str> = Vec::new();
    let mut s = String::new();
    s.push_str("| Paradigm | Model | LEM ↑ | CER ↓ | FID ↓ | HVA ↑ | $/img |\n");
    s.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for r in &rows {
        let mut cost = r.cost_per_image.normalize().to_string();
        if let Some(note) = r.cost_note.as_deref() {
            let i = notes.iter().position(|n| *n == note).unwrap_or_else(|| {
                notes.push(note);
                notes.len() - 1
            });
            let _ = write!(cost, "<sup>{}</sup>", footnote_marker(i));
        }
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.paradigm,
            r.model,
            one_dp(r.lem),
            one_dp(r.cer),
            one_dp(r.fid),
            one_dp(r.hva),
            cost
        );
    }
    if !notes.is_empty() {
        s.push('\n');
        for (i, n) in notes.iter().enumerate() {
            let _ = writeln!(s, "<sup>{}</sup>{n}", footnote_marker(i));
        }
    }
    if rows.iter().any(|r| !r.per_subject.is_empty()) {
        s.push_str("\n| Model | Subject | Images | LEM ↑ | CER ↓ |\n");
        s.push_str("|---|---|---:|---:|---:|\n");
        for r in &rows {
            for (subject, b) in &r.per_subject {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    r.model,
                    subject,
                    b.images,
                    one_dp(b.lem),
                    one_dp(b.cer)
                );
            }
        }
    }
    s
}

fn cost_table(reports: &[MetricReport]) -> Result<String, crate::metrics::CostError> {
    let cols: Vec<(&str, CostBreakdown, &crate::metrics::CostScenario)> = sorted(reports)
        .into_iter()
        .filter_map(|r| r.cost_scenario.as_ref().map(|c| (r, c)))
        .map(|(_, c)| effective_cost(c).map(|b| (c.name.as_str(), b, c)))
        .collect::<Result<_, _>>()?;
    let mut s = String::from("| Scenario |");
    for (name, _, _) in &cols {
        let _ = write!(s, " {name} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(cols.len()));
    s.push('\n');
    if cols.is_empty() {
        return Ok(s);
    }
    let row = |s: &mut String, label: &str, f: &dyn Fn(&CostBreakdown, &crate::metrics::CostScenario) -> String| {
        let _ = write!(s, "| {label} |");
        for (_, b, c) in &cols {
            let _ = write!(s, " {} |", f(b, c));
        }
        s.push('\n');
    };
    let plain = |c: &crate::metrics::CostScenario| c.per_image * Decimal::from(c.diagrams_per_deck);
    row(&mut s, "Per image ($)", &|_, c| format_money(c.per_image, 3, false));
    row(&mut s, "Per deck ($)", &|_, c| format_money(plain(c), 2, false));
    row(&mut s, "Teacher/yr ($)", &|_, c| {
        format_money(plain(c) * Decimal::from(c.decks_per_week * c.weeks_per_year), 2, false)
    });
    row(&mut s, "School/yr ($)", &|_, c| {
        format_money(
            plain(c) * Decimal::from(c.decks_per_week * c.weeks_per_year) * Decimal::from(c.teachers),
            2,
            true,
        )
    });
    if cols.iter().any(|(_, _, c)| !c.regen_rate.is_zero()) {
        row(&mut s, "Regeneration rate", &|_, c| format!("{}%", (c.regen_rate * Decimal::ONE_HUNDRED).normalize()));
        row(&mut s, "Eff. multiplier", &|b, _| format!("{}×", format_money(b.multiplier, 2, false)));
        row(&mut s, "Eff. school/yr ($)", &|b, _| format_money(b.per_school_year, 2, true));
    }
    let (_, _, first) = cols[0];
    if cols.iter().all(|(_, _, c)| {
        (c.diagrams_per_deck, c.decks_per_week, c.weeks_per_year, c.teachers)
            == (first.diagrams_per_deck, first.decks_per_week, first.weeks_per_year, first.teachers)
    }) {
        let _ = writeln!(
            s,
            "\n{} diagrams per deck; {} wks × {} deck/wk; {} teachers.",
            first.diagrams_per_deck, first.weeks_per_year, first.decks_per_week, first.teachers
        );
    }
    Ok(s)
}

/// Deterministic Markdown; row order does not depend on input order.
pub fn render_report(reports: &[MetricReport], layout: ReportLayout) -> Result<String, crate::metrics::CostError> {
    match layout {
        ReportLayout::AccuracyTable => Ok(accuracy_table(reports)),
        ReportLayout::CostTable => cost_table(reports),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Paradigm;
    use std::str::FromStr;

    #[test]
    fn money_formatting() {
        let d = |s| Decimal::from_str(s).unwrap();
        assert_eq!(format_money(d("0.04"), 3, false), "0.040");
        assert_eq!(format_money(d("0.48"), 2, false), "0.48");
        assert_eq!(format_money(d("19.2"), 2, false), "19.20");
        assert_eq!(format_money(d("960.00"), 2, true), "960");
        assert_eq!(format_money(d("1920"), 2, true), "1,920");
        assert_eq!(format_money(d("1371.4285714"), 2, true), "1,371.43");
        assert_eq!(format_money(d("1234567.5"), 0, false), "1,234,568");
    }

    #[test]
    fn empty_tables_are_header_only() {
        let acc = render_report(&[], ReportLayout::AccuracyTable).unwrap();
        assert_eq!(acc.lines().count(), 2);
        let cost = render_report(&[], ReportLayout::CostTable).unwrap();
        assert_eq!(cost, "| Scenario |\n|---|\n");
    }

    #[test]
    fn row_order_is_canonical() {
        let a = MetricReport::new(Paradigm::Cage, "CAGE");
        let b = MetricReport::new(Paradigm::OpenSourceDiffusion, "SDXL");
        let c = MetricReport::new(Paradigm::OpenSourceDiffusion, "Flux");
        let one = render_report(&[a.clone(), b.clone(), c.clone()], ReportLayout::AccuracyTable).unwrap();
        let two = render_report(&[c, a, b], ReportLayout::AccuracyTable).unwrap();
        assert_eq!(one, two);
        assert!(one.find("Flux").unwrap() < one.find("SDXL").unwrap());
    }
}
