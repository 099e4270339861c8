//! Scenario files, reports, flowpipe CSV and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box, PlanarRegion};
use crate::hybrid::{ModeId, PropertyConfig, Variant, RANGE_THRESHOLD};
use crate::lqr::ModeTuning;
use crate::numsim::Trajectory;
use crate::orbital::{OrbitalParams, DEFAULT_CHASER_MASS, DEFAULT_MU, DEFAULT_ORBIT_RADIUS};
use crate::verifier::{Scenario, SweepRow, VerificationReport, DEFAULT_WINDOW};

/// On-disk scenario. Every key is optional; missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub variant: Variant,
    pub mu: f64,
    pub r_orbit: f64,
    pub m_c: f64,
    pub init_center: Vec<f64>,
    pub init_halfwidth: Vec<f64>,
    pub t1_s: f64,
    pub t2_s: f64,
    pub horizon_s: f64,
    pub step_s: f64,
    pub window_width_s: f64,
    pub bryson: ModeTuning,
    pub properties: PropertyConfig,
    pub seed: u64,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            variant: Variant::LinProx,
            mu: DEFAULT_MU,
            r_orbit: DEFAULT_ORBIT_RADIUS,
            m_c: DEFAULT_CHASER_MASS,
            init_center: vec![-900.0, -400.0, 0.0, 0.0],
            init_halfwidth: vec![25.0, 25.0, 0.0, 0.0],
            t1_s: 7200.0,
            t2_s: 7500.0,
            horizon_s: 16200.0,
            step_s: 1.0,
            window_width_s: DEFAULT_WINDOW,
            bryson: ModeTuning::default(),
            properties: PropertyConfig::default(),
            seed: 0,
        }
    }
}

impl ScenarioFile {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            variant: sc.variant,
            mu: sc.params.mu(),
            r_orbit: sc.params.orbit_radius(),
            m_c: sc.params.chaser_mass(),
            init_center: sc.init.center().iter().copied().collect(),
            init_halfwidth: sc.init.half_widths().iter().copied().collect(),
            t1_s: sc.t1,
            t2_s: sc.t2,
            horizon_s: sc.horizon,
            step_s: sc.h,
            window_width_s: sc.window,
            bryson: sc.tuning,
            properties: sc.properties,
            seed: sc.seed,
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let numbers = [
            ("/mu", self.mu),
            ("/r_orbit", self.r_orbit),
            ("/m_c", self.m_c),
            ("/t1_s", self.t1_s),
            ("/t2_s", self.t2_s),
            ("/horizon_s", self.horizon_s),
            ("/step_s", self.step_s),
            ("/window_width_s", self.window_width_s),
        ];
        for (ptr, v) in numbers {
            if !v.is_finite() {
                return Err(Error::config(ptr, "value must be finite"));
            }
        }
        let params = OrbitalParams::new(self.mu, self.r_orbit, self.m_c).map_err(|e| {
            let ptr = if !(self.mu > 0.0) {
                "/mu"
            } else if !(self.r_orbit > 0.0) {
                "/r_orbit"
            } else {
                "/m_c"
            };
            Error::config(ptr, e.to_string())
        })?;
        let n = self.init_center.len();
        if !(n == 4 || n == 6) {
            return Err(Error::config(
                "/init_center",
                format!("expected 4 or 6 numbers, got {n}"),
            ));
        }
        if self.init_halfwidth.len() != n {
            return Err(Error::config("/init_halfwidth", format!("expected {n} numbers")));
        }
        for (i, v) in self.init_center.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::config(format!("/init_center/{i}"), "value must be finite"));
            }
        }
        for (i, v) in self.init_halfwidth.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::config(
                    format!("/init_halfwidth/{i}"),
                    "half-width must be finite and >= 0",
                ));
            }
        }
        for (mode, b) in [("prox_a", &self.bryson.prox_a), ("prox_b", &self.bryson.prox_b)] {
            if b.max_state
                .iter()
                .chain(b.max_input.iter())
                .any(|v| !(v.is_finite() && *v > 0.0))
            {
                return Err(Error::config(format!("/bryson/{mode}"), "maxima must be positive"));
            }
        }
        let init = Box::from_center(&self.init_center, &self.init_halfwidth)
            .map_err(|e| Error::config("/init_halfwidth", e.to_string()))?;
        let sc = Scenario {
            params,
            variant: self.variant,
            init,
            t1: self.t1_s,
            t2: self.t2_s,
            horizon: self.horizon_s,
            h: self.step_s,
            window: self.window_width_s,
            tuning: self.bryson,
            properties: self.properties,
            seed: self.seed,
        };
        sc.validate()?;
        Ok(sc)
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(key),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parse a scenario document.
pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let ptr = pointer(e.path());
        let inner = e.into_inner();
        // unknown keys are reported against their parent object
        Error::config(
            ptr,
            format!("{inner} (line {}, column {})", inner.line(), inner.column()),
        )
    })
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_file(text)?.to_scenario()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    parse_scenario(&fs::read_to_string(path)?)
}

/// Canonical JSON form: every key, fixed order, shortest round-trip floats.
pub fn canonical_scenario(file: &ScenarioFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("scenario serializes");
    s.push('\n');
    s
}

pub fn save_scenario(sc: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, canonical_scenario(&ScenarioFile::from_scenario(sc)))?;
    Ok(())
}

pub fn report_json(report: &VerificationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn emit_report(report: &VerificationReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report_json(report))?;
    Ok(())
}

pub fn load_report(path: impl AsRef<Path>) -> Result<VerificationReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// One flowpipe box.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowpipeRow {
    pub step: usize,
    pub time_s: f64,
    pub mode: ModeId,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub flags: Vec<String>,
}

/// Rows grouped by pipe in report order, each pipe sorted by (step, mode).
pub fn flowpipe_rows(report: &VerificationReport) -> Vec<FlowpipeRow> {
    let names = report.property_names();
    let h = report.config.step_s;
    let mut pipes: Vec<&str> = Vec::new();
    for s in &report.flowpipe {
        if !pipes.contains(&s.pipe.as_str()) {
            pipes.push(&s.pipe);
        }
    }
    let mut out = Vec::new();
    for pipe in pipes {
        let mut rows: Vec<FlowpipeRow> = report
            .flowpipe
            .iter()
            .filter(|s| s.pipe == pipe)
            .flat_map(|s| {
                s.boxes.iter().zip(&s.flags).enumerate().map(|(i, (b, f))| {
                    let step = s.start_step + i;
                    FlowpipeRow {
                        step,
                        time_s: step as f64 * h,
                        mode: s.mode,
                        lo: b.lo().iter().copied().collect(),
                        hi: b.hi().iter().copied().collect(),
                        flags: (0..names.len())
                            .filter(|p| f >> p & 1 == 1)
                            .map(|p| names[p].clone())
                            .collect(),
                    }
                })
            })
            .collect();
        rows.sort_by_key(|r| (r.step, r.mode));
        out.extend(rows);
    }
    out
}

fn flowpipe_header(dim: usize) -> String {
    let mut h = String::from("step,time_s,mode");
    for i in 1..=dim {
        let _ = write!(h, ",lo_{i}");
    }
    for i in 1..=dim {
        let _ = write!(h, ",hi_{i}");
    }
    h.push_str(",flags");
    h
}

/// Flowpipe CSV text; numbers carry 17 significant digits.
pub fn flowpipe_csv(report: &VerificationReport) -> String {
    let dim = report.config.variant.dim();
    let mut out = flowpipe_header(dim);
    out.push('\n');
    for r in flowpipe_rows(report) {
        let _ = write!(out, "{},{:.16e},{}", r.step, r.time_s, r.mode);
        for v in r.lo.iter().chain(&r.hi) {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{}", r.flags.join(";"));
    }
    out
}

pub fn emit_flowpipe(report: &VerificationReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, flowpipe_csv(report))?;
    Ok(())
}

pub fn parse_flowpipe(text: &str) -> Result<Vec<FlowpipeRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Domain("empty flowpipe file".into()))?;
    let cols = header.split(',').count();
    if cols < 4 || (cols - 4) % 2 != 0 {
        return Err(Error::Domain(format!("malformed flowpipe header {header:?}")));
    }
    let dim = (cols - 4) / 2;
    if header != flowpipe_header(dim) {
        return Err(Error::Domain(format!("unexpected flowpipe header {header:?}")));
    }
    let bad = |n: usize| Error::Domain(format!("malformed flowpipe row {n}"));
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols {
                return Err(bad(n + 2));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n + 2));
            let nums = f[3..3 + 2 * dim].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            Ok(FlowpipeRow {
                step: f[0].parse().map_err(|_| bad(n + 2))?,
                time_s: num(f[1])?,
                mode: f[2].parse()?,
                lo: nums[..dim].to_vec(),
                hi: nums[dim..].to_vec(),
                flags: f[cols - 1]
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
            })
        })
        .collect()
}

pub fn load_flowpipe(path: impl AsRef<Path>) -> Result<Vec<FlowpipeRow>> {
    parse_flowpipe(&fs::read_to_string(path)?)
}

/// Trajectory CSV: `time_s,mode,x_1..x_n`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let dim = traj.states.first().map_or(0, |s| s.len());
    let mut out = String::from("time_s,mode");
    for i in 1..=dim {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mode = traj.modes.get(k).map_or("", |m| m.as_str());
        let _ = write!(out, "{t:.16e},{mode}");
        for v in x.iter() {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

/// State-space plane of a plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Xy,
    VxVy,
    UxUy,
}

impl Plane {
    pub fn indices(self) -> (usize, usize) {
        match self {
            Plane::Xy => (0, 1),
            Plane::VxVy => (2, 3),
            Plane::UxUy => (4, 5),
        }
    }

    fn labels(self) -> (&'static str, &'static str) {
        match self {
            Plane::Xy => ("x [m]", "y [m]"),
            Plane::VxVy => ("vx [m/s]", "vy [m/s]"),
            Plane::UxUy => ("ux [N]", "uy [N]"),
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(Plane::Xy),
            "vxvy" => Ok(Plane::VxVy),
            "uxuy" => Ok(Plane::UxUy),
            _ => Err(Error::Domain(format!(
                "unknown plane {s:?} (expected xy, vxvy or uxuy)"
            ))),
        }
    }
}

/// Plot frame: data rectangle mapped to the drawing area, y up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 640.0;
pub const SVG_MARGIN: f64 = 70.0;

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        SVG_MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (SVG_WIDTH - 2.0 * SVG_MARGIN)
    }

    pub fn py(&self, y: f64) -> f64 {
        SVG_MARGIN + (self.y_max - y) / (self.y_max - self.y_min) * (SVG_HEIGHT - 2.0 * SVG_MARGIN)
    }

    fn include(&mut self, x: f64, y: f64) {
        self.x_min = self.x_min.min(x);
        self.x_max = self.x_max.max(x);
        self.y_min = self.y_min.min(y);
        self.y_max = self.y_max.max(y);
    }

    fn pad(mut self) -> Self {
        let dx = (self.x_max - self.x_min).max(1e-12) * 0.05;
        let dy = (self.y_max - self.y_min).max(1e-12) * 0.05;
        self.x_min -= dx;
        self.x_max += dx;
        self.y_min -= dy;
        self.y_max += dy;
        self
    }
}

/// Most rectangles drawn per mode and pipe; longer runs are thinned evenly.
pub const MAX_RECTS_PER_PIPE: usize = 1500;

fn mode_colour(mode: ModeId) -> &'static str {
    match mode {
        ModeId::ProxA => "#1f77b4",
        ModeId::ProxB => "#2ca02c",
        ModeId::Passive => "#ff7f0e",
    }
}

fn overlays(plane: Plane, props: &PropertyConfig) -> Vec<(&'static str, Vec<[f64; 2]>)> {
    let closed = |v: Vec<[f64; 2]>| v;
    match plane {
        Plane::Xy => {
            let t = props.los_half_angle_deg.to_radians().tan();
            let base = props.los_base_x_m;
            let w = props.separation_half_width_m;
            vec![
                ("guard", closed(PlanarRegion::octagon(RANGE_THRESHOLD).vertices())),
                ("los", vec![[0.0, 0.0], [base, -base * t], [base, base * t]]),
                ("separation", vec![[-w, -w], [w, -w], [w, w], [-w, w]]),
            ]
        }
        Plane::VxVy => vec![(
            "velocity",
            PlanarRegion::inscribed_octagon(props.velocity_limit_mps, 0.0).vertices(),
        )],
        Plane::UxUy => {
            let l = props.thrust_limit_n;
            vec![("thrust", vec![[-l, -l], [l, -l], [l, l], [-l, l]])]
        }
    }
}

/// SVG of flowpipe boxes projected on `plane`.
pub fn plot_svg(rows: &[FlowpipeRow], dim: usize, props: &PropertyConfig, plane: Plane) -> Result<String> {
    let (i, j) = plane.indices();
    if j >= dim {
        return Err(Error::Domain(format!(
            "plane {plane:?} needs thrust states; the variant has {dim} dims"
        )));
    }
    let shapes = overlays(plane, props);
    let mut frame = Frame {
        x_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_min: f64::INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for r in rows {
        frame.include(r.lo[i], r.lo[j]);
        frame.include(r.hi[i], r.hi[j]);
    }
    for (_, pts) in &shapes {
        for p in pts {
            frame.include(p[0], p[1]);
        }
    }
    let frame = frame.pad();

    // thin long runs per (mode, pipe break)
    let mut keep = vec![false; rows.len()];
    let mut start = 0;
    while start < rows.len() {
        let mode = rows[start].mode;
        let mut end = start + 1;
        while end < rows.len() && rows[end].mode == mode && rows[end].step > rows[end - 1].step {
            end += 1;
        }
        let n = end - start;
        let stride = n.div_ceil(MAX_RECTS_PER_PIPE).max(1);
        for k in (start..end).step_by(stride) {
            keep[k] = true;
        }
        keep[end - 1] = true;
        start = end;
    }
    // interleaved A/B rows share steps, so thin per mode instead when needed
    if rows.len() > 3 * MAX_RECTS_PER_PIPE {
        for mode in ModeId::ALL {
            let idx: Vec<usize> = (0..rows.len()).filter(|&k| rows[k].mode == mode).collect();
            let stride = idx.len().div_ceil(MAX_RECTS_PER_PIPE).max(1);
            for (n, &k) in idx.iter().enumerate() {
                keep[k] = n % stride == 0 || n + 1 == idx.len();
            }
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<metadata data-x-min="{:e}" data-x-max="{:e}" data-y-min="{:e}" data-y-max="{:e}"/>"#,
        frame.x_min, frame.x_max, frame.y_min, frame.y_max
    );
    s.push_str("<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\" class=\"background\"/>\n");
    for (k, r) in rows.iter().enumerate() {
        if !keep[k] {
            continue;
        }
        let (x0, x1) = (frame.px(r.lo[i]), frame.px(r.hi[i]));
        let (y0, y1) = (frame.py(r.hi[j]), frame.py(r.lo[j]));
        let _ = writeln!(
            s,
            r#"<rect class="reach {mode}" data-step="{step}" x="{x0:.6}" y="{y0:.6}" width="{w:.6}" height="{h:.6}" fill="{c}" fill-opacity="0.25" stroke="{c}" stroke-width="0.5"/>"#,
            mode = r.mode,
            step = r.step,
            w = x1 - x0,
            h = y1 - y0,
            c = mode_colour(r.mode),
        );
    }
    for (name, pts) in &shapes {
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.6},{:.6}", frame.px(p[0]), frame.py(p[1])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon class="overlay {name}" points="{}" fill="none" stroke="red" stroke-width="1.2" stroke-dasharray="4 2"/>"#,
            path.join(" ")
        );
    }
    axes(&mut s, &frame, plane.labels());
    s.push_str("</svg>\n");
    Ok(s)
}

fn axes(s: &mut String, f: &Frame, (xl, yl): (&str, &str)) {
    let (left, right) = (SVG_MARGIN, SVG_WIDTH - SVG_MARGIN);
    let (top, bottom) = (SVG_MARGIN, SVG_HEIGHT - SVG_MARGIN);
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    for t in 0..=4 {
        let fx = f.x_min + (f.x_max - f.x_min) * t as f64 / 4.0;
        let fy = f.y_min + (f.y_max - f.y_min) * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            f.px(fx),
            bottom + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            f.py(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="label" x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{xl}</text>"#,
        SVG_WIDTH / 2.0,
        SVG_HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text class="label" x="20" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{yl}</text>"#,
        SVG_HEIGHT / 2.0,
        SVG_HEIGHT / 2.0
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e5) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

pub fn emit_plot(report: &VerificationReport, plane: Plane, path: impl AsRef<Path>) -> Result<()> {
    let svg = plot_svg(
        &flowpipe_rows(report),
        report.config.variant.dim(),
        &report.config.properties,
        plane,
    )?;
    fs::write(path, svg)?;
    Ok(())
}

/// Sweep table: `angle_deg,radius_m,max_safe_T_s`, with -1 for "never".
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("angle_deg,radius_m,max_safe_T_s\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.angle_deg, r.radius_m, r.max_safe_t_s.unwrap_or(-1.0));
    }
    out
}

/// Polar chart of the sweep: one wedge per angle, shaded by the safe time.
pub fn sweep_svg(rows: &[SweepRow], horizon: f64) -> String {
    let c = 320.0;
    let radius = 260.0;
    let step = if rows.len() > 1 {
        let mut a: Vec<f64> = rows.iter().map(|r| r.angle_deg).collect();
        a.sort_by(f64::total_cmp);
        a.windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(360.0, f64::min)
    } else {
        10.0
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="680" viewBox="0 0 640 680">"#
    );
    s.push_str("<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for r in rows {
        let a0 = (r.angle_deg - step / 2.0).to_radians();
        let a1 = (r.angle_deg + step / 2.0).to_radians();
        let p = |a: f64| (c + radius * a.cos(), c - radius * a.sin());
        let (x0, y0) = p(a0);
        let (x1, y1) = p(a1);
        let fill = match r.max_safe_t_s {
            None => "#d62728".to_string(),
            Some(t) => {
                let f = (t / horizon).clamp(0.0, 1.0);
                let g = (90.0 + 140.0 * f).round() as u8;
                let rb = (220.0 - 180.0 * f).round() as u8;
                format!("#{rb:02x}{g:02x}{rb:02x}")
            }
        };
        let _ = writeln!(
            s,
            r#"<path class="wedge" data-angle="{}" data-max-safe-t="{}" d="M {c:.3} {c:.3} L {x0:.3} {y0:.3} A {radius} {radius} 0 0 0 {x1:.3} {y1:.3} Z" fill="{fill}" stroke="white" stroke-width="0.5"/>"#,
            r.angle_deg,
            r.max_safe_t_s.unwrap_or(-1.0),
        );
    }
    let _ = writeln!(
        s,
        r#"<circle cx="{c}" cy="{c}" r="4" fill="black"/><text x="{c}" y="{:.1}" font-size="13" text-anchor="middle">target; wedge shade = latest safe abort time (red: never)</text>"#,
        c + radius + 40.0
    );
    s.push_str("</svg>\n");
    s
}
