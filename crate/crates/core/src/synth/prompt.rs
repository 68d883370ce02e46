use std::fmt::Write as _;

use super::{RenderLanguage, StructureStatus, VerificationResult, REGIONS_FILE, STRUCTURE_FILE};
use crate::benchmark::DiagramPrompt;

/// Line prefix under which the required labels are embedded as a JSON array.
pub const LABELS_MARKER: &str = "Required labels (JSON): ";

/// Instruction text for the code-writing model. Every ground-truth label is
/// embedded verbatim; with `feedback`, the failed checks are listed.
pub fn build_codegen_prompt(
    prompt: &DiagramPrompt,
    language: RenderLanguage,
    feedback: Option<&VerificationResult>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Write a complete program that renders an educational diagram.");
    let _ = writeln!(s);
    let _ = writeln!(s, "Prompt id: {}", prompt.id);
    let _ = writeln!(s, "Subject: {}", prompt.subject);
    let _ = writeln!(s, "Grade band: {}", prompt.grade_band);
    let _ = writeln!(s, "Topic: {}", prompt.topic);
    let _ = writeln!(s, "Rendering language: {}", language);
    let _ = writeln!(s, "Request: {}", prompt.prompt_text);
    let _ = writeln!(s);
    let _ = writeln!(s, "Requirements:");
    let _ = writeln!(
        s,
        "1. Draw every required label exactly as written, one label per call, using {}.",
        language.label_construct()
    );
    let _ = writeln!(
        s,
        "   Do not abbreviate, translate, re-case or split a label across calls."
    );
    let _ = writeln!(
        s,
        "2. The program must run without errors and write the image to the output path it is given."
    );
    let _ = writeln!(
        s,
        "3. Write {STRUCTURE_FILE} as {{\"nodes\": [...], \"edges\": [[a, b], ...]}} describing which labelled parts are connected,"
    );
    let _ = writeln!(
        s,
        "   and {REGIONS_FILE} as a list of {{\"text\", \"bbox\": {{\"x\", \"y\", \"width\", \"height\"}}}} entries in output pixels."
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Required labels: {}", prompt.labels.join(", "));
    let _ = writeln!(
        s,
        "{LABELS_MARKER}{}",
        serde_json::to_string(&prompt.labels).expect("strings serialize")
    );

    if let Some(fb) = feedback {
        if !fb.passed() {
            let _ = writeln!(s);
            let _ = writeln!(s, "The previous attempt failed these checks:");
            if !fb.labels_ok {
                let missing: Vec<String> =
                    fb.missing_labels.iter().map(|l| format!("\"{l}\"")).collect();
                let _ = writeln!(s, "- labels: missing {}", missing.join(", "));
                if let Some(detail) = &fb.label_detail {
                    let _ = writeln!(s, "  ({detail})");
                }
            }
            if !fb.executes_ok {
                let err = fb.execution_error.as_deref().unwrap_or("execution failed");
                let _ = writeln!(s, "- execution: {}", truncate(err, 2000));
            }
            if fb.structure == StructureStatus::Fail {
                let _ = writeln!(
                    s,
                    "- structure: {}",
                    fb.structure_detail.as_deref().unwrap_or("graph is not connected")
                );
            }
            let _ = writeln!(s, "Fix every failed check and return the full corrected program.");
        }
    }
    let _ = writeln!(s);
    let _ = write!(s, "Return only the source code.");
    s
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// First line of the language-selection instruction.
pub const LANGUAGE_TASK: &str = "Choose the rendering language for an educational diagram.";

/// Asks the model to pick one of [`RenderLanguage::ALL`]. The prompt id is
/// deliberately left out so scripted replies keyed by id stay untouched.
pub fn build_language_prompt(prompt: &DiagramPrompt) -> String {
    let options: Vec<&str> = RenderLanguage::ALL.iter().map(|l| l.as_str()).collect();
    let mut s = String::new();
    let _ = writeln!(s, "{LANGUAGE_TASK}");
    let _ = writeln!(s);
    let _ = writeln!(s, "Subject: {}", prompt.subject);
    let _ = writeln!(s, "Grade band: {}", prompt.grade_band);
    let _ = writeln!(s, "Topic: {}", prompt.topic);
    let _ = writeln!(s, "Labels: {}", prompt.labels.join(", "));
    let _ = writeln!(s, "Request: {}", prompt.prompt_text);
    let _ = writeln!(s);
    let _ = write!(s, "Options: {}\nAnswer with exactly one option.", options.join(", "));
    s
}

/// First token of the reply that names a language.
pub fn parse_language_choice(reply: &str) -> Option<RenderLanguage> {
    strip_code_fences(reply)
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | ':' | '"' | '\'' | '`' | '*' | '(' | ')'))
        .map(|t| t.trim_end_matches('.'))
        .find_map(|t| t.parse().ok())
}

/// Recovers the labels embedded by [`build_codegen_prompt`].
pub fn parse_required_labels(instruction: &str) -> Option<Vec<String>> {
    instruction
        .lines()
        .find_map(|l| l.strip_prefix(LABELS_MARKER))
        .and_then(|json| serde_json::from_str(json).ok())
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return text;
    };
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => return text,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{GradeBand, Subject};

    #[test]
    fn language_replies() {
        assert_eq!(parse_language_choice("svg"), Some(RenderLanguage::Svg));
        assert_eq!(parse_language_choice("I'd use **TikZ**."), Some(RenderLanguage::LatexTikz));
        assert_eq!(parse_language_choice("```\npython-matplotlib\n```"), Some(RenderLanguage::PythonMatplotlib));
        assert_eq!(parse_language_choice("no idea"), None);
        let p = build_language_prompt(&digestive());
        assert!(p.starts_with(LANGUAGE_TASK));
        assert!(!p.contains("Prompt id:"));
        assert!(p.contains("Options: python-matplotlib, latex-tikz, svg"));
    }

    fn digestive() -> DiagramPrompt {
        let labels = [
            "mouth",
            "esophagus",
            "stomach",
            "liver",
            "gallbladder",
            "pancreas",
            "small intestine",
            "large intestine",
            "rectum",
        ];
        DiagramPrompt::new(
            "bio-001",
            Subject::Biology,
            GradeBand::G6to8,
            "human digestive system",
            labels.iter().map(|s| s.to_string()).collect(),
            "Generate a labeled diagram of the human digestive system showing: mouth, esophagus, stomach, liver, gallbladder, pancreas, small intestine, large intestine, rectum.",
        )
        .unwrap()
    }

    #[test]
    fn embeds_every_label() {
        let p = digestive();
        let text = build_codegen_prompt(&p, RenderLanguage::Svg, None);
        assert!(text.contains(
            "Required labels: mouth, esophagus, stomach, liver, gallbladder, pancreas, small intestine, large intestine, rectum"
        ));
        assert_eq!(parse_required_labels(&text).unwrap(), p.labels);
        assert!(!text.contains("previous attempt"));
    }

    #[test]
    fn feedback_names_missing_label() {
        let p = digestive();
        let fb = VerificationResult {
            labels_ok: false,
            missing_labels: vec!["rectum".into()],
            label_detail: None,
            executes_ok: true,
            execution_error: None,
            structure: StructureStatus::Skipped,
            structure_detail: None,
        };
        let text = build_codegen_prompt(&p, RenderLanguage::PythonMatplotlib, Some(&fb));
        assert!(text.contains("- labels: missing \"rectum\""), "{text}");
        assert!(!text.contains("- execution"));
    }

    #[test]
    fn fences() {
        assert_eq!(strip_code_fences("```python\nprint(1)\n```\n"), "print(1)\n");
        assert_eq!(strip_code_fences("print(1)"), "print(1)");
        assert_eq!(strip_code_fences("```\n<svg/>\n```"), "<svg/>\n");
    }
}
