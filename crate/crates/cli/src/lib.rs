//! Command implementations behind the `wd` binary.

pub mod config;
pub mod output;

use std::io::Write;

use serde_json::{json, Value};
use wd_core::frames::{build_frames, gradient_bound, FrameOptions, FramePipeline, GradientBoundReport};
use wd_core::galerkin::{frame_truncate, truncate_family};
use wd_core::kmesh::build_mesh;
use wd_core::model::{check_gap, refined_gap, BlochModel, ModelFamily, ProjectorFamily};
use wd_core::topology::{berry_curvature, chern};
use wd_core::wannier::{dichotomy_report, exp_fit, hs_norm, moments, synthesize, Classification, DichotomyOptions, ExpFit};
use wd_core::WdError;

use config::{BuildError, RunConfig};
use output::{field, num, nums, params, SCHEMA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_GAP: i32 = 2;
pub const EXIT_CERTIFICATE: i32 = 3;

/// Exit code for a pipeline error.
pub fn exit_code(e: &WdError) -> i32 {
    match e {
        WdError::GapClosure { .. } => EXIT_GAP,
        WdError::NonCoprimeFlux { .. }
        | WdError::OddMeshSize(_)
        | WdError::SupercellTooSmall { .. }
        | WdError::InvalidInput(_)
        | WdError::NonCommutingGenerators(_)
        | WdError::CovarianceMismatch(_) => EXIT_CONFIG,
        _ => EXIT_CERTIFICATE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Chern,
    Frame,
    Wannier,
    Dichotomy,
    Galerkin,
    Gap,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Chern => "chern",
            Command::Frame => "frame",
            Command::Wannier => "wannier",
            Command::Dichotomy => "dichotomy",
            Command::Galerkin => "galerkin",
            Command::Gap => "gap",
        }
    }
}

/// Result of a command: exit code, JSON document and named CSV tables.
/// The first CSV is the one printed under `--format csv`.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub json: Value,
    pub csv: Vec<(String, String)>,
}

/// Failure before any JSON could be produced.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<WdError> for Failure {
    fn from(e: WdError) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Config(c) => Failure { code: EXIT_CONFIG, message: c.to_string() },
            BuildError::Core(e) => e.into(),
        }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure { code: EXIT_CONFIG, message: e.to_string() }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    match cmd {
        Command::Chern => cmd_chern(cfg, &model),
        Command::Frame => cmd_frame(cfg, &model),
        Command::Wannier => cmd_wannier(cfg, &model),
        Command::Dichotomy => cmd_dichotomy(cfg, &model),
        Command::Galerkin => cmd_galerkin(cfg, &model),
        Command::Gap => cmd_gap(cfg, &model),
    }
}

fn header(cmd: Command, cfg: &RunConfig, model: &BlochModel) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema".into(), json!(SCHEMA));
    m.insert("command".into(), json!(cmd.name()));
    m.insert("model".into(), json!(model.name));
    m.insert("params".into(), params(&model.params));
    m.insert("N".into(), json!(cfg.mesh_n));
    m
}

fn certified(cfg: &RunConfig, model: &BlochModel, n: usize) -> Result<ModelFamily, WdError> {
    ModelFamily::new(model.clone()).with_gap_tol(cfg.tolerances.gap).certified(n)
}

fn frame_options(cfg: &RunConfig) -> FrameOptions {
    let w = cfg.tolerances.smoothing_width;
    FrameOptions { steps_per_unit: cfg.tolerances.steps_per_unit, smoothing_width: (w > 0.0).then_some(w) }
}

fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

pub fn cmd_chern(cfg: &RunConfig, model: &BlochModel) -> Result<Outcome, Failure> {
    let n = cfg.mesh_n;
    let mesh = build_mesh(n)?;
    let family = certified(cfg, model, n)?;
    let r = chern(&family, &mesh)?;
    let mut j = header(Command::Chern, cfg, model);
    j.insert("chern_int".into(), json!(r.value_int));
    j.insert("chern_float".into(), num(r.value_float));
    j.insert("discrepancy".into(), num(r.discrepancy));
    j.insert("min_gap".into(), num(family.gap_floor().unwrap_or(f64::NAN)));
    let field = berry_curvature(&family, &mesh)?;
    let field_csv = csv_string(|w| field.write_csv(w));
    Ok(Outcome { code: EXIT_OK, json: Value::Object(j), csv: vec![("curvature.csv".into(), field_csv)] })
}

fn gradient_json(g: &GradientBoundReport) -> Value {
    json!({
        "sup_weighted": num(g.sup_weighted),
        "sup_gradient": num(g.sup_gradient),
        "per_radius_profile": g.per_radius_profile.iter().map(|(r, v)| json!([num(*r), num(*v)])).collect::<Vec<_>>(),
    })
}

fn frame_summary(pipe: &FramePipeline, family: &ModelFamily) -> Result<Value, WdError> {
    let (orth, sub) = pipe.radial.residuals(family)?;
    let mut v = json!({
        "vertex_residual": num(pipe.skeleton.vertex_residual),
        "edge_residual": num(pipe.skeleton.edge_residual),
        "radial": {
            "orthonormality": num(orth),
            "subordination": num(sub),
            "singular_points": pipe.radial.singular_kpoints().iter().map(|k| nums(k)).collect::<Vec<_>>(),
            "gradient": gradient_json(&gradient_bound(&pipe.radial)),
        },
        "smoothed": Value::Null,
        "smoothing_obstruction": pipe.smoothing_error.as_ref().map(|e| e.to_string()),
    });
    if let Some(sm) = &pipe.smoothed {
        let (orth, sub) = sm.residuals(family)?;
        v["smoothed"] = json!({
            "orthonormality": num(orth),
            "subordination": num(sub),
            "gradient": gradient_json(&gradient_bound(sm)),
        });
    }
    Ok(v)
}

const HS_ORDERS: [f64; 3] = [0.5, 0.75, 1.0];

pub fn cmd_frame(cfg: &RunConfig, model: &BlochModel) -> Result<Outcome, Failure> {
    let n = cfg.mesh_n;
    let opts = frame_options(cfg);
    let family = certified(cfg, model, n)?;
    let pipe = build_frames(&family, &build_mesh(n)?, &opts)?;
    let mut j = header(Command::Frame, cfg, model);
    j.insert("frame".into(), frame_summary(&pipe, &family)?);

    let mut sweep: Vec<usize> = cfg.ls().iter().map(|l| 2 * l).chain([n]).collect();
    sweep.sort_unstable();
    sweep.dedup();
    let mut hs = Vec::new();
    for &nn in &sweep {
        let p = if nn == n { pipe.clone() } else { build_frames(&certified(cfg, model, nn)?, &build_mesh(nn)?, &opts)? };
        for s in HS_ORDERS {
            let h = hs_norm(p.best(), s);
            hs.push(json!({"s": num(s), "N": nn, "norm": num(h.norm), "seminorm": num(h.seminorm), "smoothed": p.smoothed.is_some()}));
        }
    }
    j.insert("hs_table".into(), Value::Array(hs));
    let frame_csv = csv_string(|w| pipe.best().write_csv(w, &model.params));
    Ok(Outcome { code: EXIT_OK, json: Value::Object(j), csv: vec![("frame.csv".into(), frame_csv)] })
}

fn fit_json(f: &Result<ExpFit, WdError>) -> Value {
    match f {
        Ok(f) => json!({
            "beta": num(f.beta),
            "r2": num(f.r2),
            "power_law_r2": num(f.power_law_r2),
            "power_law_like": f.power_law_like,
            "shells": f.shells,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn cmd_wannier(cfg: &RunConfig, model: &BlochModel) -> Result<Outcome, Failure> {
    let n = cfg.mesh_n;
    let family = certified(cfg, model, n)?;
    let pipe = build_frames(&family, &build_mesh(n)?, &frame_options(cfg))?;
    let w = synthesize(pipe.best(), n / 2, model.lattice_basis)?;
    let m = moments(&w, &cfg.s_grid);
    let mut j = header(Command::Wannier, cfg, model);
    j.insert("L".into(), json!(n / 2));
    j.insert("smoothed".into(), json!(pipe.smoothed.is_some()));
    j.insert("masked_points".into(), json!(w.masked_points));
    j.insert("mass".into(), nums(&m.mass));
    j.insert("max_overlap".into(), num(w.max_overlap()));
    j.insert("s_grid".into(), nums(&m.s_grid));
    j.insert("moments".into(), Value::Array(m.moments.iter().map(|r| nums(r)).collect()));
    j.insert("tail_moments".into(), Value::Array(m.tail_moments.iter().map(|r| nums(r)).collect()));
    j.insert("second_moment".into(), nums(&m.second_moment));
    j.insert("center".into(), Value::Array(m.center.iter().map(|c| nums(c)).collect()));
    j.insert("mv_spread".into(), num(m.mv_spread));
    j.insert("exp_fit".into(), Value::Array(exp_fit(&w).iter().map(fit_json).collect()));
    let csv = csv_string(|out| w.write_csv(out));
    Ok(Outcome { code: EXIT_OK, json: Value::Object(j), csv: vec![("wannier.csv".into(), csv)] })
}

fn truncation_json(family: &dyn ProjectorFamily, pipe: Option<&FramePipeline>, ns: &[usize], mesh_n: usize) -> Result<(Value, bool), WdError> {
    let mesh = build_mesh(mesh_n)?;
    let mut rows = Vec::new();
    let mut failed = false;
    for &n in ns {
        let mut row = json!({ "n": n });
        match truncate_family(family, n, &mesh) {
            Ok((_, r)) => {
                row["min_injectivity"] = num(r.min_injectivity);
                row["certified"] = json!(r.certified);
                row["chern_original"] = json!(r.chern_original);
                row["chern_truncated"] = json!(r.chern_truncated);
                row["chern_preserved"] = json!(r.chern_preserved);
                row["projector_h1_distance"] = num(r.projector_h1_distance);
            }
            Err(e @ WdError::InvalidInput(_)) => return Err(e),
            Err(e) => {
                failed = true;
                row["error"] = json!(e.to_string());
            }
        }
        if let Some(p) = pipe {
            row["frame_h1_distance"] = match frame_truncate(p.best(), n) {
                Ok(t) => num(t.h1_distance),
                Err(e) => json!({ "error": e.to_string() }),
            };
        }
        rows.push(row);
    }
    Ok((Value::Array(rows), failed))
}

pub fn cmd_dichotomy(cfg: &RunConfig, model: &BlochModel) -> Result<Outcome, Failure> {
    let opts = DichotomyOptions {
        frame: frame_options(cfg),
        s_grid: cfg.s_grid.clone(),
        hs_s: HS_ORDERS.to_vec(),
        gap_tol: cfg.tolerances.gap,
    };
    let r = dichotomy_report(model, cfg.mesh_n, &cfg.ls(), &opts)?;
    let mut j = header(Command::Dichotomy, cfg, model);
    j.insert("chern_int".into(), json!(r.chern_int));
    j.insert("chern_float".into(), num(r.chern_float));
    j.insert(
        "per_L".into(),
        Value::Array(
            r.per_l
                .iter()
                .map(|row| json!({"L": row.l, "N": row.n, "X2": nums(&row.x2), "F_MV": num(row.f_mv), "smoothed": row.smoothed}))
                .collect(),
        ),
    );
    j.insert(
        "hs_table".into(),
        Value::Array(r.hs_table.iter().map(|h| json!({"s": num(h.s), "N": h.n, "norm": num(h.norm), "seminorm": num(h.seminorm)})).collect()),
    );
    j.insert("exp_fit".into(), Value::Array(r.exp_fit.iter().map(fit_json).collect()));
    let lin = |f: &Option<wd_core::wannier::LinearFit>| {
        f.map_or(Value::Null, |f| json!({"slope": num(f.slope), "intercept": num(f.intercept), "r2": num(f.r2)}))
    };
    j.insert("x2_log_fit".into(), lin(&r.x2_log_fit));
    j.insert("fmv_log_fit".into(), lin(&r.fmv_log_fit));
    j.insert("smoothing_obstruction".into(), json!(r.smoothing_obstruction));
    j.insert("classification".into(), json!(r.classification.as_str()));
    let mut code = if r.classification == Classification::Inconclusive { EXIT_CERTIFICATE } else { EXIT_OK };
    if !cfg.truncate.is_empty() {
        let family = certified(cfg, model, cfg.mesh_n)?;
        let (rows, failed) = truncation_json(&family, None, &cfg.truncate, cfg.mesh_n)?;
        j.insert("truncation".into(), rows);
        if failed {
            code = EXIT_CERTIFICATE;
        }
    }

    let per_l = {
        let mut s = String::from("L,N,band,X2,F_MV\n");
        for row in &r.per_l {
            for (a, x2) in row.x2.iter().enumerate() {
                s += &format!("{},{},{a},{},{}\n", row.l, row.n, field(*x2), field(row.f_mv));
            }
        }
        s
    };
    let hs = {
        let mut s = String::from("s,N,norm,seminorm\n");
        for h in &r.hs_table {
            s += &format!("{},{},{},{}\n", h.s, h.n, field(h.norm), field(h.seminorm));
        }
        s
    };
    Ok(Outcome { code, json: Value::Object(j), csv: vec![("per_L.csv".into(), per_l), ("hs_table.csv".into(), hs)] })
}

pub fn cmd_galerkin(cfg: &RunConfig, model: &BlochModel) -> Result<Outcome, Failure> {
    let n = cfg.mesh_n;
    let family = certified(cfg, model, n)?;
    let pipe = build_frames(&family, &build_mesh(n)?, &frame_options(cfg))?;
    let ns: Vec<usize> = if cfg.truncate.is_empty() { (family.rank().max(1)..=family.dim()).collect() } else { cfg.truncate.clone() };
    let (rows, failed) = truncation_json(&family, Some(&pipe), &ns, n)?;
    let mut csv = String::from("n,min_injectivity,certified,chern_original,chern_truncated,projector_h1_distance\n");
    for row in rows.as_array().unwrap() {
        let get = |k: &str| row.get(k).map_or(String::new(), |v| v.to_string());
        csv += &format!(
            "{},{},{},{},{},{}\n",
            get("n"),
            get("min_injectivity"),
            get("certified"),
            get("chern_original"),
            get("chern_truncated"),
            get("projector_h1_distance")
        );
    }
    let mut j = header(Command::Galerkin, cfg, model);
    j.insert("dim".into(), json!(family.dim()));
    j.insert("rank".into(), json!(family.rank()));
    j.insert("truncation".into(), rows);
    Ok(Outcome { code: if failed { EXIT_CERTIFICATE } else { EXIT_OK }, json: Value::Object(j), csv: vec![("galerkin.csv".into(), csv)] })
}

pub fn cmd_gap(cfg: &RunConfig, model: &BlochModel) -> Result<Outcome, Failure> {
    let n = cfg.mesh_n;
    let scan = check_gap(model, n)?;
    let (gap, k) = refined_gap(model, n)?;
    let gapped = scan.min_gap >= cfg.tolerances.gap && gap >= cfg.tolerances.gap;
    let mut j = header(Command::Gap, cfg, model);
    j.insert("min_gap_mesh".into(), num(scan.min_gap));
    j.insert("argmin_k_mesh".into(), nums(&scan.argmin_k));
    j.insert("min_gap".into(), num(gap.min(scan.min_gap)));
    j.insert("argmin_k".into(), nums(if gap < scan.min_gap { &k } else { &scan.argmin_k }));
    j.insert("gap_tol".into(), num(cfg.tolerances.gap));
    j.insert("gapped".into(), json!(gapped));
    let csv = format!("min_gap_mesh,min_gap,k1,k2\n{},{},{},{}\n", field(scan.min_gap), field(gap), field(k[0]), field(k[1]));
    Ok(Outcome { code: if gapped { EXIT_OK } else { EXIT_GAP }, json: Value::Object(j), csv: vec![("gap.csv".into(), csv)] })
}

/// Writes `<command>.json` and the CSV tables into `dir`.
pub fn write_outputs(dir: &std::path::Path, cmd: Command, out: &Outcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(format!("{}.json", cmd.name())))?;
    f.write_all(output::render(&out.json).as_bytes())?;
    for (name, body) in &out.csv {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}
