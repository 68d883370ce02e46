#![cfg(all(unix, feature = "sandbox"))]

use cage_core::backends::command::{CommandSpec, SubprocessRenderer};
use cage_core::backends::mock::{LayoutRenderer, TemplateLlm};
use cage_core::benchmark::{DiagramPrompt, GradeBand, Subject};
use cage_core::harness::{run_pipeline, Backends, BackendsConfig, PipelineConfig, PromptStatus};
use cage_core::synth::{render, CodeArtifact, RenderError, RenderLanguage, RenderLimits};

/// A renderer command that ignores the source, copies a prepared PNG to
/// `{output}` and writes the region sidecar.
fn canned_renderer(dir: &std::path::Path, labels: &[String]) -> SubprocessRenderer {
    let (image, regions, structure) = LayoutRenderer::default().draw(labels);
    image.write_png(&dir.join("canned.png")).unwrap();
    std::fs::write(dir.join("regions.json"), serde_json::to_string(&regions).unwrap()).unwrap();
    std::fs::write(dir.join("structure.json"), serde_json::to_string(&structure).unwrap()).unwrap();
    let script = format!(
        "test -s {{source}} && cp {d}/canned.png {{output}} && cp {d}/regions.json {d}/structure.json {{workdir}}/",
        d = dir.display()
    );
    SubprocessRenderer::default().with_command(RenderLanguage::Svg, CommandSpec::new(["sh", "-c", script.as_str()]))
}

#[test]
fn subprocess_renderer_reads_output_and_sidecars() {
    let tmp = tempfile::tempdir().unwrap();
    let labels = vec!["xylem".to_string(), "phloem".to_string()];
    let renderer = canned_renderer(tmp.path(), &labels);
    let artifact = CodeArtifact::new(RenderLanguage::Svg, TemplateLlm::program(RenderLanguage::Svg, &labels), 1).unwrap();
    let out = render(&artifact, &renderer, &RenderLimits::default()).unwrap();
    assert_eq!(out.regions.len(), 2);
    assert_eq!(out.structure.unwrap().edges.len(), 1);
    assert_eq!(out.image, LayoutRenderer::default().draw(&labels).0);
}

#[test]
fn renderer_timeout_is_reported() {
    let renderer = SubprocessRenderer::default()
        .with_command(RenderLanguage::Svg, CommandSpec::new(["sh", "-c", "sleep 5"]));
    let artifact = CodeArtifact::new(RenderLanguage::Svg, "<svg><text>a</text></svg>", 1).unwrap();
    let limits = RenderLimits {
        timeout_ms: 200,
        ..RenderLimits::default()
    };
    let t = std::time::Instant::now();
    let err = render(&artifact, &renderer, &limits).unwrap_err();
    assert!(matches!(err, RenderError::Timeout { limit_ms: 200 }), "{err}");
    assert!(t.elapsed().as_secs() < 4);
}

#[test]
fn pipeline_with_subprocess_renderer() {
    let tmp = tempfile::tempdir().unwrap();
    let labels = vec!["xylem".to_string(), "phloem".to_string(), "stoma".to_string()];
    let mut backends = Backends::from_config(&BackendsConfig::mock()).unwrap();
    backends.renderer = Box::new(canned_renderer(tmp.path(), &labels));
    let prompt = DiagramPrompt::new("bio-leaf", Subject::Biology, GradeBand::G9to12, "leaf", labels, "Draw a leaf.").unwrap();
    let run = run_pipeline(&[prompt], &backends, &PipelineConfig::mock(), &tmp.path().join("run")).unwrap();
    let rec = &run.prompts[0];
    assert_eq!(rec.status, PromptStatus::Succeeded, "{:?}", rec.error);
    assert!(rec.pair.as_ref().unwrap().labels_preserved);
    assert_eq!(run.backends.renderer, "subprocess");
}
