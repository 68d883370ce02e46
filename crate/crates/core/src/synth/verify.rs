use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{CodeArtifact, RenderError, RenderOutput, StructureGraph};
use crate::benchmark::{normalize_label, DiagramPrompt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureStatus {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of the three pre-refinement checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub labels_ok: bool,
    pub missing_labels: Vec<String>,
    /// Set when the labels could not be extracted at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_detail: Option<String>,
    pub executes_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_error: Option<String>,
    pub structure: StructureStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_detail: Option<String>,
}

impl VerificationResult {
    pub fn passed(&self) -> bool {
        self.labels_ok && self.executes_ok && self.structure != StructureStatus::Fail
    }

    /// Names of failed checks: any of `labels`, `execution`, `structure`.
    pub fn failed_checks(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.labels_ok {
            v.push("labels");
        }
        if !self.executes_ok {
            v.push("execution");
        }
        if self.structure == StructureStatus::Fail {
            v.push("structure");
        }
        v
    }
}

/// Labels of `required` with no case-insensitive match in `present`.
pub(crate) fn missing_labels(required: &[String], present: &[String]) -> Vec<String> {
    let have: HashSet<String> = present.iter().map(|l| normalize_label(l)).collect();
    required
        .iter()
        .filter(|l| !have.contains(&normalize_label(l)))
        .cloned()
        .collect()
}

/// Runs the label, execution and structure checks. `render_result` is `None`
/// when the code was never executed.
pub fn verify_code(
    artifact: &CodeArtifact,
    prompt: &DiagramPrompt,
    render_result: Option<&Result<RenderOutput, RenderError>>,
) -> VerificationResult {
    let missing = missing_labels(&prompt.labels, artifact.extracted_labels());
    let (executes_ok, execution_error, structure, structure_detail) = match render_result {
        None => (false, Some("code was not executed".to_string()), StructureStatus::Skipped, None),
        Some(Err(e)) => (false, Some(e.to_string()), StructureStatus::Skipped, None),
        Some(Ok(out)) => match &out.structure {
            None => (
                true,
                None,
                StructureStatus::Skipped,
                Some("no structure sidecar emitted".to_string()),
            ),
            Some(graph) => {
                let check = check_structure(graph);
                let status = if check.connected {
                    StructureStatus::Pass
                } else {
                    StructureStatus::Fail
                };
                (true, None, status, Some(check.detail))
            }
        },
    };
    if structure == StructureStatus::Skipped && executes_ok {
        log::warn!(
            "prompt {}: structure check skipped, no sidecar",
            prompt.id
        );
    }
    VerificationResult {
        labels_ok: missing.is_empty(),
        missing_labels: missing,
        label_detail: None,
        executes_ok,
        execution_error,
        structure,
        structure_detail,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureCheck {
    pub connected: bool,
    /// Connected components, each sorted; the first holds the first node.
    pub components: Vec<Vec<String>>,
    pub detail: String,
}

/// Undirected connectivity of the sidecar graph. Edge endpoints that are not
/// declared as nodes are added implicitly. An empty graph counts as
/// disconnected.
pub fn check_structure(graph: &StructureGraph) -> StructureCheck {
    let mut order: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for n in graph
        .nodes
        .iter()
        .map(String::as_str)
        .chain(graph.edges.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]))
    {
        if seen.insert(n) {
            order.push(n);
        }
    }
    if order.is_empty() {
        return StructureCheck {
            connected: false,
            components: Vec::new(),
            detail: "structure graph has no nodes".into(),
        };
    }
    let mut adj: BTreeMap<&str, Vec<&str>> = order.iter().map(|n| (*n, Vec::new())).collect();
    for (a, b) in &graph.edges {
        adj.get_mut(a.as_str()).expect("declared").push(b.as_str());
        adj.get_mut(b.as_str()).expect("declared").push(a.as_str());
    }

    let mut visited: HashSet<&str> = HashSet::new();
    let mut components = Vec::new();
    for start in &order {
        if visited.contains(start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([*start]);
        visited.insert(start);
        while let Some(n) = queue.pop_front() {
            comp.insert(n.to_string());
            for m in &adj[n] {
                if visited.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        components.push(comp.into_iter().collect::<Vec<_>>());
    }
    let connected = components.len() == 1;
    let detail = if connected {
        format!("connected: {} node(s)", order.len())
    } else {
        let rest: Vec<String> = components[1..]
            .iter()
            .map(|c| format!("{{{}}}", c.join(", ")))
            .collect();
        format!(
            "{} components; unreachable from {:?}: {}",
            components.len(),
            order[0],
            rest.join(" ")
        )
    };
    StructureCheck {
        connected,
        components,
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{GradeBand, Subject};
    use crate::imaging::RasterImage;
    use crate::synth::RenderLanguage;

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> StructureGraph {
        StructureGraph {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    #[test]
    fn two_connected_nodes() {
        assert!(check_structure(&graph(&["A", "B"], &[("A", "B")])).connected);
    }

    #[test]
    fn isolated_node_reported() {
        let c = check_structure(&graph(&["A", "B", "C"], &[("A", "B")]));
        assert!(!c.connected);
        assert_eq!(c.components, vec![vec!["A", "B"], vec!["C"]]);
        assert!(c.detail.contains("{C}"), "{}", c.detail);
    }

    #[test]
    fn singleton_is_connected() {
        assert!(check_structure(&graph(&["A"], &[])).connected);
    }

    #[test]
    fn edges_introduce_nodes() {
        let c = check_structure(&graph(&["A"], &[("A", "B"), ("C", "D")]));
        assert_eq!(c.components.len(), 2);
    }

    fn prompt(labels: &[&str]) -> DiagramPrompt {
        DiagramPrompt::new(
            "p",
            Subject::Biology,
            GradeBand::G6to8,
            "t",
            labels.iter().map(|s| s.to_string()).collect(),
            "x",
        )
        .unwrap()
    }

    fn output(structure: Option<StructureGraph>) -> RenderOutput {
        RenderOutput {
            image: RasterImage::filled(8, 8, [255; 3]),
            regions: vec![],
            structure,
            stdout: String::new(),
            stderr: String::new(),
            wall_time_ms: 0,
        }
    }

    #[test]
    fn passing_verification() {
        let a = CodeArtifact::new(RenderLanguage::Svg, "<text>Mouth</text><text>liver</text>", 1).unwrap();
        let r = Ok(output(Some(graph(&["mouth", "liver"], &[("mouth", "liver")]))));
        let v = verify_code(&a, &prompt(&["mouth", "Liver"]), Some(&r));
        assert!(v.passed(), "{v:?}");
        assert_eq!(v.structure, StructureStatus::Pass);
    }

    #[test]
    fn missing_label_listed() {
        let a = CodeArtifact::new(RenderLanguage::Svg, "<text>mouth</text>", 1).unwrap();
        let v = verify_code(&a, &prompt(&["mouth", "rectum"]), Some(&Ok(output(None))));
        assert!(!v.labels_ok);
        assert_eq!(v.missing_labels, vec!["rectum"]);
        assert_eq!(v.structure, StructureStatus::Skipped);
        assert!(!v.passed());
        assert_eq!(v.failed_checks(), vec!["labels"]);
    }

    #[test]
    fn execution_failure_captured() {
        let a = CodeArtifact::new(RenderLanguage::Svg, "<text>mouth</text>", 1).unwrap();
        let err = Err(RenderError::NonZeroExit {
            code: Some(1),
            stderr: "NameError: plt".into(),
            stdout: String::new(),
        });
        let v = verify_code(&a, &prompt(&["mouth"]), Some(&err));
        assert!(!v.executes_ok);
        assert!(v.execution_error.unwrap().contains("NameError"));
        let v = verify_code(&a, &prompt(&["mouth"]), None);
        assert!(!v.executes_ok);
    }

    #[test]
    fn disconnected_structure_fails() {
        let a = CodeArtifact::new(RenderLanguage::Svg, "<text>A</text>", 1).unwrap();
        let r = Ok(output(Some(graph(&["A", "B"], &[]))));
        let v = verify_code(&a, &prompt(&["A"]), Some(&r));
        assert_eq!(v.structure, StructureStatus::Fail);
        assert!(!v.passed());
    }
}
