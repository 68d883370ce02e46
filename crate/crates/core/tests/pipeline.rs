use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cage_core::backends::glyph;
use cage_core::backends::mock::{GlyphOcr, HistogramEmbedder, LayoutRenderer, ScriptedLlm, TemplateLlm};
use cage_core::benchmark::{DiagramPrompt, GradeBand, Subject};
use cage_core::harness::config::{DiffusionSpec, LabelRendererSpec};
use cage_core::harness::{
    evaluate_run, load_masks, run_pipeline, Backends, BackendsConfig, ConfigError, EvalOptions, FailureStage,
    ImageSource, PipelineConfig, PromptStatus, RunRecord, PROG_IMAGE, REFINED_IMAGE,
};
use cage_core::imaging::RasterImage;
use cage_core::metrics::{verify_pair, PairStatus};
use cage_core::backends::BackendError;
use cage_core::synth::{LlmBackend, RenderLanguage, RenderOutput, LANGUAGE_TASK};

fn prompt(id: &str, subject: Subject, labels: &[&str]) -> DiagramPrompt {
    DiagramPrompt::new(
        id,
        subject,
        GradeBand::G6to8,
        format!("topic {id}"),
        labels.iter().map(|s| s.to_string()).collect(),
        format!("Draw a labeled diagram for {id}."),
    )
    .unwrap()
}

fn ten_prompts() -> Vec<DiagramPrompt> {
    let pool = [
        "mouth", "esophagus", "stomach", "liver", "pancreas", "nucleus", "ribosome", "anode", "cathode",
        "electron", "lens", "focal point", "hypotenuse", "angle A", "vertex",
    ];
    (0..10)
        .map(|i| {
            let n = 3 + i % 4;
            let labels: Vec<&str> = (0..n).map(|k| pool[(i * 3 + k) % pool.len()]).collect();
            prompt(&format!("p-{i:02}"), Subject::ALL[i % 4], &labels)
        })
        .collect()
}

fn mock_backends() -> Backends {
    Backends::from_config(&BackendsConfig::mock()).unwrap()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn prompt_subtrees_are_byte_stable_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = &ten_prompts()[..3];
    let mut cfg = PipelineConfig::mock();
    cfg.seed = 11;
    let a = run_pipeline(prompts, &mock_backends(), &cfg, &tmp.path().join("a")).unwrap();
    cfg.jobs = 3;
    let b = run_pipeline(prompts, &mock_backends(), &cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(a.prompts, b.prompts);
    for p in &a.prompts {
        let (da, db) = (tmp.path().join("a").join(&p.dir), tmp.path().join("b").join(&p.dir));
        let files = files_under(&da);
        assert_eq!(files, files_under(&db));
        assert!(files.len() > 5);
        for f in files {
            assert_eq!(std::fs::read(da.join(&f)).unwrap(), std::fs::read(db.join(&f)).unwrap(), "{}", f.display());
        }
    }
}

#[test]
fn existing_run_dir_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("x"), "").unwrap();
    let err = run_pipeline(&ten_prompts()[..1], &mock_backends(), &PipelineConfig::mock(), tmp.path());
    assert!(err.is_err());
}

#[test]
fn missing_diffusion_backend_is_a_config_error() {
    let mut cfg = BackendsConfig::mock();
    cfg.diffusion = None;
    assert!(matches!(Backends::from_config(&cfg), Err(ConfigError::MissingBackend("diffusion"))));
}

#[test]
fn label_preservation_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = ten_prompts();
    let scripts = prompts.iter().fold(ScriptedLlm::new(), |llm, p| {
        let language = PipelineConfig::default().language.language_for(p.subject);
        llm.script(&p.id, vec![format!("```\n{}```", TemplateLlm::program(language, &p.labels))])
    });
    let mut backends = mock_backends();
    backends.llm = Box::new(scripts);
    let cfg = PipelineConfig::mock();
    let run_dir = tmp.path().join("run");
    let run = run_pipeline(&prompts, &backends, &cfg, &run_dir).unwrap();
    assert_eq!(run.succeeded().count(), 10);

    for p in run.succeeded() {
        let dir = run_dir.join(&p.dir);
        let prog = RasterImage::read_png(&dir.join(PROG_IMAGE)).unwrap();
        let refined = RasterImage::read_png(&dir.join(REFINED_IMAGE)).unwrap();
        let (_, mask) = load_masks(&dir).unwrap();
        assert!(mask.count() > 0);
        assert_ne!(prog, refined, "diffusion must change the image");
        for (x, y) in mask.set_pixels() {
            assert_eq!(prog.get(x, y), refined.get(x, y), "{} ({x},{y})", p.prompt.id);
        }
        assert_eq!(p.pair.as_ref().unwrap().overall, PairStatus::Pending);
    }

    let report = evaluate_run(&run_dir, &run, None, &GlyphOcr, None, &EvalOptions::default()).unwrap();
    assert_eq!(report.lem, Some(100.0));
    assert_eq!(report.cer, Some(0.0));
    assert_eq!(report.images, 10);
    assert_eq!(report.per_subject.len(), 4);
}

#[test]
fn one_missing_label_in_thirty_two() {
    let tmp = tempfile::tempdir().unwrap();
    let words = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "theta"];
    let prompts: Vec<DiagramPrompt> = (0..4)
        .map(|i| prompt(&format!("q-{i}"), Subject::Physics, &words))
        .collect();
    let run_dir = tmp.path().join("run");
    let run = run_pipeline(&prompts, &mock_backends(), &PipelineConfig::mock(), &run_dir).unwrap();

    let dir = run_dir.join(&run.prompts[2].dir);
    let regions = cage_core::harness::load_regions(&dir).unwrap();
    let (_, bbox) = regions.iter().find(|(t, _)| t == "kappa").unwrap();
    let mut refined = RasterImage::read_png(&dir.join(REFINED_IMAGE)).unwrap();
    refined.fill_rect(bbox.x as i64, bbox.y as i64, bbox.width as i64, bbox.height as i64, [255, 255, 255]);
    refined.write_png(&dir.join(REFINED_IMAGE)).unwrap();

    let report = evaluate_run(&run_dir, &run, None, &GlyphOcr, None, &EvalOptions::default()).unwrap();
    assert_eq!(report.lem, Some(31.0 / 32.0 * 100.0));
    assert_eq!(report.lem, Some(96.875));
    assert!(report.cer.unwrap() > 0.0);
}

#[test]
fn fid_of_a_run_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let run = run_pipeline(&ten_prompts(), &mock_backends(), &PipelineConfig::mock(), &run_dir).unwrap();
    let refs: Vec<RasterImage> = run
        .succeeded()
        .map(|p| RasterImage::read_png(&run_dir.join(&p.dir).join(REFINED_IMAGE)).unwrap())
        .collect();
    let report = evaluate_run(&run_dir, &run, Some(&refs), &GlyphOcr, Some(&HistogramEmbedder), &EvalOptions::default())
        .unwrap();
    assert!(report.fid.unwrap() <= 1e-6, "{:?}", report.fid);

    let opts = EvalOptions {
        source: ImageSource::Programmatic,
        ..EvalOptions::default()
    };
    let report = evaluate_run(&run_dir, &run, Some(&refs), &GlyphOcr, Some(&HistogramEmbedder), &opts).unwrap();
    assert!(report.fid.unwrap() > 1e-3);
    assert_eq!(report.lem, Some(100.0));
}

#[test]
fn repair_converges_on_second_attempt() {
    let tmp = tempfile::tempdir().unwrap();
    let mut backends = mock_backends();
    backends.llm = Box::new(TemplateLlm::omitting(["stomach"]));
    let run_dir = tmp.path().join("run");
    let p = prompt("bio-1", Subject::Biology, &["mouth", "stomach", "liver"]);
    let run = run_pipeline(&[p], &backends, &PipelineConfig::mock(), &run_dir).unwrap();
    let rec = &run.prompts[0];
    assert_eq!(rec.status, PromptStatus::Succeeded);
    assert_eq!(rec.attempts, 2);
    for n in 1..=2 {
        assert!(run_dir.join(&rec.dir).join(format!("attempt-{n}/code.svg")).exists());
        assert!(run_dir.join(&rec.dir).join(format!("attempt-{n}/verify.json")).exists());
    }
    let first: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run_dir.join(&rec.dir).join("attempt-1/verify.json")).unwrap()).unwrap();
    assert_eq!(first["missing_labels"], serde_json::json!(["stomach"]));
}

#[test]
fn never_passing_script_exhausts() {
    let tmp = tempfile::tempdir().unwrap();
    let labels = ["mouth", "stomach", "liver"];
    let broken = TemplateLlm::program(RenderLanguage::PythonMatplotlib, &["mouth".to_string()]);
    let mut backends = mock_backends();
    backends.llm = Box::new(ScriptedLlm::new().script("chem-1", vec![broken]));
    let mut cfg = PipelineConfig::mock();
    cfg.max_attempts = 4;
    let run_dir = tmp.path().join("run");
    let run = run_pipeline(
        &[prompt("chem-1", Subject::Chemistry, &labels), prompt("chem-2", Subject::Chemistry, &labels)],
        &backends,
        &cfg,
        &run_dir,
    )
    .unwrap();
    let failed = run.find("chem-1").unwrap();
    assert_eq!(failed.status, PromptStatus::Failed);
    assert_eq!(failed.failed_stage, Some(FailureStage::Synthesis));
    assert!(failed.error.as_deref().unwrap().starts_with("exhausted"));
    assert_eq!(failed.attempts, 4);
    for n in 1..=4 {
        assert!(run_dir.join(&failed.dir).join(format!("attempt-{n}/code.py")).exists());
    }
    assert!(!run_dir.join(&failed.dir).join("attempt-5").exists());
    assert!(!run_dir.join(&failed.dir).join(REFINED_IMAGE).exists());
    assert_eq!(run.find("chem-2").unwrap().status, PromptStatus::Succeeded);

    let reloaded = RunRecord::load(&run_dir).unwrap();
    assert_eq!(reloaded.prompts, run.prompts);
}

#[test]
fn identity_diffusion_run_uses_configured_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::mock();
    cfg.backends.diffusion = Some(DiffusionSpec::Identity);
    let backends = Backends::from_config(&cfg.backends).unwrap();
    let run = run_pipeline(&ten_prompts()[..2], &backends, &cfg, &tmp.path().join("r")).unwrap();
    assert_eq!(run.backends.diffusion, "identity");
}

/// Answers the language question with a fixed reply, writes code otherwise.
struct Chooser(&'static str);

impl LlmBackend for Chooser {
    fn name(&self) -> &str {
        "chooser"
    }

    fn generate(&self, instruction: &str) -> Result<String, BackendError> {
        if instruction.starts_with(LANGUAGE_TASK) {
            return Ok(self.0.to_string());
        }
        TemplateLlm::new().generate(instruction)
    }
}

#[test]
fn llm_language_choice_with_fallback() {
    let prompts = [prompt("bio", Subject::Biology, &["nucleus", "membrane"])];
    let mut cfg = PipelineConfig::mock();
    cfg.language.ask_llm = true;
    let tmp = tempfile::tempdir().unwrap();
    for (i, (reply, expected)) in [
        ("Use latex-tikz.", RenderLanguage::LatexTikz),
        ("something else", RenderLanguage::Svg),
    ]
    .into_iter()
    .enumerate()
    {
        let mut backends = mock_backends();
        backends.llm = Box::new(Chooser(reply));
        let run_dir = tmp.path().join(format!("r{i}"));
        let run = run_pipeline(&prompts, &backends, &cfg, &run_dir).unwrap();
        let rec = &run.prompts[0];
        assert_eq!(rec.language, expected, "{reply}");
        let code = format!("attempt-1/code.{}", expected.file_extension());
        assert!(run_dir.join(&rec.dir).join(code).exists());
    }

    // the mock answers from the subject, so scripted replies stay unconsumed
    cfg.language.by_subject.clear();
    let run = run_pipeline(&prompts, &mock_backends(), &cfg, &tmp.path().join("r2")).unwrap();
    assert_eq!(run.prompts[0].language, RenderLanguage::Svg);
    cfg.language.fixed = Some(RenderLanguage::PythonMatplotlib);
    let run = run_pipeline(&prompts, &mock_backends(), &cfg, &tmp.path().join("r3")).unwrap();
    assert_eq!(run.prompts[0].language, RenderLanguage::PythonMatplotlib);
}

#[test]
fn label_renderer_redraws_instead_of_copying() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = &ten_prompts()[..4];
    let copy = tmp.path().join("copy");
    let cfg = PipelineConfig::mock();
    let run_copy = run_pipeline(prompts, &mock_backends(), &cfg, &copy).unwrap();

    let mut cfg = PipelineConfig::mock();
    cfg.backends.labels = Some(LabelRendererSpec::Glyph { padding: 2 });
    let backends = Backends::from_config(&cfg.backends).unwrap();
    let redraw = tmp.path().join("redraw");
    let run = run_pipeline(prompts, &backends, &cfg, &redraw).unwrap();
    assert_eq!(run.succeeded().count(), 4);

    let mut differs = 0;
    for (a, b) in run_copy.prompts.iter().zip(&run.prompts) {
        let pixel_copy = RasterImage::read_png(&copy.join(&a.dir).join(REFINED_IMAGE)).unwrap();
        let redrawn = RasterImage::read_png(&redraw.join(&b.dir).join(REFINED_IMAGE)).unwrap();
        differs += usize::from(pixel_copy != redrawn);
        let pair = b.pair.as_ref().unwrap();
        assert!(pair.labels_preserved && pair.topology_ok, "{}: {pair:?}", b.prompt.id);
    }
    assert_eq!(differs, 4);
    let report = evaluate_run(&redraw, &run, None, &GlyphOcr, None, &EvalOptions::default()).unwrap();
    assert_eq!((report.lem, report.cer), (Some(100.0), Some(0.0)));
}

fn rendered(labels: &[&str]) -> RenderOutput {
    let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    let (image, regions, structure) = LayoutRenderer::default().draw(&labels);
    RenderOutput {
        image,
        regions,
        structure: Some(structure),
        stdout: String::new(),
        stderr: String::new(),
        wall_time_ms: 0,
    }
}

#[test]
fn pair_verification_fixtures() {
    let prog = rendered(&["Na", "Cl", "H2"]);

    let identity = verify_pair(&prog, &prog.image, &GlyphOcr, 0.5).unwrap();
    assert!(identity.labels_preserved && identity.topology_ok);
    assert_eq!(identity.min_iou, Some(1.0));
    assert_eq!(identity.overall, PairStatus::Pending);

    let target = &prog.regions[1];
    let b = target.bbox;
    let mut erased = prog.image.clone();
    erased.fill_rect(b.x as i64, b.y as i64, b.width as i64, b.height as i64, [255, 255, 255]);
    let v = verify_pair(&prog, &erased, &GlyphOcr, 0.5).unwrap();
    assert!(!v.labels_preserved);
    assert_eq!(v.missing_labels, vec!["Cl".to_string()]);
    assert_eq!(v.overall, PairStatus::Rejected);

    // shift by 40% of the glyph width: overlap 0.6w, union 1.4w
    let shift = (b.width * 0.4) as i64;
    assert_eq!(shift as f64, b.width * 0.4);
    assert_eq!(glyph::glyph_width("Cl") as f64, b.width);
    let mut moved = erased.clone();
    glyph::draw_label(&mut moved, b.x as i64 + shift, b.y as i64, "Cl");
    let v = verify_pair(&prog, &moved, &GlyphOcr, 0.5).unwrap();
    assert!(v.labels_preserved);
    assert!(!v.topology_ok);
    let want = 0.6 / 1.4;
    assert!((v.min_iou.unwrap() - want).abs() < 1e-12, "{:?}", v.min_iou);
    assert!((want - 3.0 / 7.0).abs() < 1e-15);
    let by_label: BTreeMap<_, _> = v.matches.iter().map(|m| (m.label.as_str(), m.iou)).collect();
    assert_eq!(by_label["Na"], 1.0);
    assert_eq!(v.overall, PairStatus::Rejected);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mock = PipelineConfig::load(&dir.join("mock.toml")).unwrap();
    mock.validate().unwrap();
    assert_eq!(mock, PipelineConfig::mock());
    let external = PipelineConfig::load(&dir.join("external.toml")).unwrap();
    external.validate().unwrap();
    assert!(external.language.ask_llm);
    let backends = Backends::from_config(&external.backends).unwrap();
    assert_eq!(backends.diffusion.name(), "sdxl-controlnet-canny");
    assert_eq!(backends.llm.name(), "gpt-4o");
}
