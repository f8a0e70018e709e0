//! Static SVG figures and CSV/JSON tables built from an analysis.
//!
//! Output is a pure function of its inputs: numbers are printed with fixed
//! precision and nothing time- or run-dependent is embedded.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::childcmp::{LearnedGrid, StageComparison};
use crate::trajectory::{mean_sem, smooth, Analysis, EvalMatrix, ProbeGroups, TrajectoryError, BIAS_STRATA};

pub const FIG_ACQUISITION: &str = "fig_acquisition.svg";
pub const FIG_GROUPS: &str = "fig_groups.svg";
pub const FIG_STAGES: &str = "fig_stages.svg";
pub const FIG_BIAS: &str = "fig_bias.svg";

const GROUP_COLORS: [&str; 4] = ["#2b8a3e", "#1971c2", "#c92a2a", "#868e96"];
const STRATUM_COLORS: [&str; 4] = ["#1971c2", "#c92a2a", "#74c0fc", "#ffa8a8"];
const LEARNED_FILL: &str = "#364fc7";
const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64, title: &str, notes: &[String]) -> Self {
        let mut body = String::new();
        let _ = writeln!(body, "<title>{}</title>", esc(title));
        for n in notes {
            let _ = writeln!(body, "<desc>{}</desc>", esc(n));
        }
        let _ = writeln!(body, "<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>");
        Svg { body, width, height }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.body, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" {FONT}>{}</text>", esc(s));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"1\"/>"
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, class: &str) {
        let mut p = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(p, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
        }
        let _ = writeln!(
            self.body,
            "<polyline class=\"{class}\" points=\"{p}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>"
        );
    }

    fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, class: &str) {
        let mut p = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(p, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
        }
        let _ = writeln!(self.body, "<polygon class=\"{class}\" points=\"{p}\" fill=\"{fill}\" fill-opacity=\"0.25\" stroke=\"none\"/>");
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Linear map of `[d0, d1]` onto `[r0, r1]`; a degenerate domain maps to `r0`.
fn scale(v: f64, d0: f64, d1: f64, r0: f64, r1: f64) -> f64 {
    if d1 == d0 {
        r0
    } else {
        r0 + (v - d0) / (d1 - d0) * (r1 - r0)
    }
}

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    t0: f64,
    t1: f64,
}

impl Panel {
    fn px(&self, step: f64) -> f64 {
        scale(step, self.t0, self.t1, self.x0, self.x0 + self.w)
    }

    fn py(&self, acc: f64) -> f64 {
        scale(acc, 0.0, 1.0, self.y0 + self.h, self.y0)
    }

    fn axes(&self, svg: &mut Svg, title: &str) {
        svg.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h, "#000000");
        svg.line(self.x0, self.y0, self.x0, self.y0 + self.h, "#000000");
        svg.line(self.x0, self.py(0.5), self.x0 + self.w, self.py(0.5), "#ced4da");
        for a in [0.0, 0.5, 1.0] {
            svg.text(self.x0 - 4.0, self.py(a) + 4.0, "end", &format!("{a:.1}"));
        }
        svg.text(self.x0, self.y0 + self.h + 14.0, "middle", &format!("{:.0}", self.t0));
        svg.text(self.x0 + self.w, self.y0 + self.h + 14.0, "middle", &format!("{:.0}", self.t1));
        svg.text(self.x0 + self.w / 2.0, self.y0 - 6.0, "middle", title);
    }
}

/// Horizontal bars of mean acquisition step for above-chance probes, in
/// ascending order, one dot per seed, colored by tercile group.
pub fn plot_acquisition_bars(analysis: &Analysis) -> String {
    let mut rows: Vec<(usize, f64)> = analysis
        .probes
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.mean_acquisition_step.map(|s| (i, s)))
        .collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let t1 = analysis.steps.last().copied().unwrap_or(0).max(1) as f64;
    let height = 60.0 + 22.0 * rows.len().max(1) as f64;
    let notes: Vec<String> = analysis.method_notes.clone();
    let mut svg = Svg::new(640.0, height, "Mean acquisition step per probe", &notes);
    let (x0, w) = (180.0, 420.0);
    svg.text(x0 + w / 2.0, 20.0, "middle", "mean acquisition step (dots: seeds)");
    for (row, &(p, mean)) in rows.iter().enumerate() {
        let probe = &analysis.probes[p];
        let group = ProbeGroups::NAMES.iter().position(|g| *g == probe.group).unwrap_or(3);
        let y = 36.0 + 22.0 * row as f64;
        let bw = scale(mean, 0.0, t1, 0.0, w);
        svg.text(x0 - 6.0, y + 12.0, "end", &probe.probe);
        let _ = writeln!(
            svg.body,
            "<rect class=\"bar\" data-probe=\"{}\" data-group=\"{}\" x=\"{x0:.2}\" y=\"{y:.2}\" width=\"{bw:.2}\" height=\"16\" fill=\"{}\"/>",
            esc(&probe.probe),
            probe.group,
            GROUP_COLORS[group]
        );
        for a in analysis.acquisition.iter().filter(|a| a.probe == probe.probe) {
            if let Some(s) = a.acquisition_step {
                let cx = x0 + scale(s as f64, 0.0, t1, 0.0, w);
                let _ = writeln!(
                    svg.body,
                    "<circle class=\"seed\" cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#000000\"/>",
                    y + 8.0
                );
            }
        }
    }
    svg.line(x0, height - 20.0, x0 + w, height - 20.0, "#000000");
    svg.text(x0, height - 6.0, "middle", "0");
    svg.text(x0 + w, height - 6.0, "middle", &format!("{t1:.0}"));
    svg.finish()
}

/// Mean ± SEM over the member probes of one group; each member curve is
/// the seed-averaged smoothed accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCurve {
    pub group: String,
    pub members: Vec<String>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
}

pub fn group_curves(m: &EvalMatrix, groups: &ProbeGroups, window: usize) -> Result<Vec<GroupCurve>, TrajectoryError> {
    let mut out = Vec::new();
    for (name, members) in ProbeGroups::NAMES.iter().zip(groups.by_index()) {
        if members.is_empty() {
            continue;
        }
        let mut curves = Vec::with_capacity(members.len());
        for &p in members {
            let mut mean = vec![0.0; m.steps.len()];
            for s in 0..m.seeds.len() {
                for (acc, v) in mean.iter_mut().zip(smooth(&m.curve(s, p), window)?) {
                    *acc += v / m.seeds.len() as f64;
                }
            }
            curves.push(mean);
        }
        if members.len() == 1 {
            warn!("group {name} has a single probe; its SEM is reported as 0");
        }
        let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
        let (mean, sem) = mean_sem(&refs);
        out.push(GroupCurve {
            group: name.to_string(),
            members: members.iter().map(|&p| m.probes[p].clone()).collect(),
            mean,
            sem,
        });
    }
    Ok(out)
}

pub fn group_curves_csv(steps: &[u64], curves: &[GroupCurve]) -> String {
    let mut out = String::from("group,step,mean,sem,n_probes\n");
    for c in curves {
        for (i, step) in steps.iter().enumerate() {
            let _ = writeln!(out, "{},{step},{},{},{}", c.group, c.mean[i], c.sem[i], c.members.len());
        }
    }
    out
}

pub fn plot_group_curves(steps: &[u64], curves: &[GroupCurve], notes: &[String]) -> String {
    let mut svg = Svg::new(640.0, 360.0, "Accuracy by acquisition group (band: SEM across probes)", notes);
    let panel = Panel {
        x0: 60.0,
        y0: 30.0,
        w: 440.0,
        h: 280.0,
        t0: steps.first().copied().unwrap_or(0) as f64,
        t1: steps.last().copied().unwrap_or(0) as f64,
    };
    panel.axes(&mut svg, "mean smoothed accuracy");
    for (k, c) in curves.iter().enumerate() {
        let color = GROUP_COLORS[ProbeGroups::NAMES.iter().position(|g| *g == c.group).unwrap_or(3)];
        let upper: Vec<(f64, f64)> =
            steps.iter().zip(c.mean.iter().zip(&c.sem)).map(|(&s, (m, e))| (panel.px(s as f64), panel.py(m + e))).collect();
        let lower: Vec<(f64, f64)> = steps
            .iter()
            .zip(c.mean.iter().zip(&c.sem))
            .rev()
            .map(|(&s, (m, e))| (panel.px(s as f64), panel.py(m - e)))
            .collect();
        let band: Vec<(f64, f64)> = upper.into_iter().chain(lower).collect();
        svg.polygon(&band, color, &format!("sem {}", c.group));
        let pts: Vec<(f64, f64)> = steps.iter().zip(&c.mean).map(|(&s, &m)| (panel.px(s as f64), panel.py(m))).collect();
        svg.polyline(&pts, color, &format!("mean {}", c.group));
        let ly = 40.0 + 16.0 * k as f64;
        svg.line(515.0, ly, 535.0, ly, color);
        svg.text(540.0, ly + 4.0, "start", &format!("{} ({})", c.group, c.members.len()));
    }
    svg.finish()
}

/// Agents × stages; filled cells are learned.
pub fn plot_stage_matrix(grid: &LearnedGrid) -> String {
    let cell = 28.0;
    let (x0, y0) = (170.0, 150.0);
    let width = x0 + cell * grid.stages.len() as f64 + 20.0;
    let height = y0 + cell * grid.agents.len() as f64 + 20.0;
    let mut svg = Svg::new(width, height, "Learned phenomena per agent", &[]);
    for (j, s) in grid.stages.iter().enumerate() {
        let x = x0 + cell * j as f64 + cell / 2.0;
        let _ = writeln!(
            svg.body,
            "<text x=\"{x:.2}\" y=\"{:.2}\" transform=\"rotate(-60 {x:.2} {:.2})\" {FONT}>{}</text>",
            y0 - 6.0,
            y0 - 6.0,
            esc(s)
        );
    }
    for (i, (agent, row)) in grid.agents.iter().zip(&grid.cells).enumerate() {
        let y = y0 + cell * i as f64;
        svg.text(x0 - 6.0, y + cell / 2.0 + 4.0, "end", agent);
        for (j, &learned) in row.iter().enumerate() {
            let _ = writeln!(
                svg.body,
                "<rect class=\"cell\" data-agent=\"{i}\" data-stage=\"{j}\" data-learned=\"{learned}\" x=\"{:.2}\" y=\"{y:.2}\" width=\"{cell:.0}\" height=\"{cell:.0}\" fill=\"{}\" stroke=\"#495057\"/>",
                x0 + cell * j as f64,
                if learned { LEARNED_FILL } else { "#ffffff" }
            );
        }
    }
    svg.finish()
}

/// One panel per probe with its four agreement strata.
pub fn plot_bias(analysis: &Analysis) -> String {
    let n = analysis.bias.len().max(1);
    let cols = 2usize.min(n);
    let rows = n.div_ceil(cols);
    let (pw, ph) = (300.0, 180.0);
    let width = 40.0 + cols as f64 * (pw + 60.0) + 120.0;
    let height = 30.0 + rows as f64 * (ph + 60.0);
    let mut svg = Svg::new(width, height, "Accuracy by verb number and congruency", &[]);
    let steps = &analysis.steps;
    if analysis.bias.is_empty() {
        svg.text(width / 2.0, height / 2.0, "middle", "no stratified probes");
    }
    for (k, b) in analysis.bias.iter().enumerate() {
        let panel = Panel {
            x0: 60.0 + (k % cols) as f64 * (pw + 60.0),
            y0: 40.0 + (k / cols) as f64 * (ph + 60.0),
            w: pw,
            h: ph,
            t0: steps.first().copied().unwrap_or(0) as f64,
            t1: steps.last().copied().unwrap_or(0) as f64,
        };
        let mut title = b.probe.clone();
        if let Some(c) = b.crossover {
            title += if c { " (plural-bias crossover)" } else { " (no crossover)" };
        }
        panel.axes(&mut svg, &title);
        for (j, (stratum, curve)) in b.curves.iter().enumerate() {
            if let Some(c) = curve {
                let pts: Vec<(f64, f64)> = steps.iter().zip(c).map(|(&s, &a)| (panel.px(s as f64), panel.py(a))).collect();
                svg.polyline(&pts, STRATUM_COLORS[j], &format!("stratum {stratum}"));
            }
        }
    }
    let lx = width - 110.0;
    for (j, name) in BIAS_STRATA.iter().map(|s| s.name()).enumerate() {
        let ly = 40.0 + 16.0 * j as f64;
        svg.line(lx, ly, lx + 20.0, ly, STRATUM_COLORS[j]);
        svg.text(lx + 24.0, ly + 4.0, "start", name);
    }
    svg.finish()
}

/// Plain-text summary of the headline numbers.
pub fn summary_text(analysis: &Analysis, stages: Option<&StageComparison>) -> String {
    let mut out = String::from("Learning-trajectory report\n\nMethods\n");
    for n in &analysis.method_notes {
        let _ = writeln!(out, "- {n}");
    }
    let _ = writeln!(out, "\nSeeds: {}  Checkpoints: {}", analysis.seeds.len(), analysis.steps.len());
    let _ = writeln!(out, "\nProbes (mean final accuracy, mean acquisition step, group)");
    let width = analysis.probes.iter().map(|p| p.probe.len()).max().unwrap_or(0);
    for p in &analysis.probes {
        let step = p.mean_acquisition_step.map_or("-".to_string(), |s| format!("{s:.1}"));
        let _ = writeln!(out, "  {:<width$} {:.3}  {:>8}  {}", p.probe, p.mean_final_accuracy, step, p.group);
    }
    match &analysis.rank_correlation {
        Some(r) => {
            let _ = writeln!(
                out,
                "\nRank agreement: R = {:.4} over {} probes, permutation p = {:.4} ({} permutations)",
                r.observed, r.n_probes, r.p_value, r.n_perm
            );
        }
        None => out.push_str("\nRank agreement: not computed\n"),
    }
    if let Some(d) = &analysis.early_derivative {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "Positive derivative over the first {} checkpoints: early {} middle {} late {} below-chance {} (above chance overall {})",
            d.k_checkpoints,
            f(d.per_group[0]),
            f(d.per_group[1]),
            f(d.per_group[2]),
            f(d.per_group[3]),
            f(d.above_chance)
        );
    }
    match &analysis.anova {
        Some(a) if a.degenerate => out.push_str("Learning-rate ANOVA: degenerate (zero within-group variance)\n"),
        Some(a) => {
            let _ = writeln!(out, "Learning-rate ANOVA: F({}, {}) = {:.4}, p = {:.3e}", a.df_between, a.df_within, a.f, a.p_value);
        }
        None => out.push_str("Learning-rate ANOVA: not computed\n"),
    }
    for b in &analysis.bias {
        let verdict = match b.crossover {
            Some(true) => "plural-up-then-down / singular-down-then-up crossover observed",
            Some(false) => "crossover not observed",
            None => "strata missing",
        };
        let _ = writeln!(out, "Number bias, {}: {verdict}", b.probe);
    }
    if let Some(s) = stages {
        let _ = writeln!(
            out,
            "\nStage order ({:?}, threshold {}): {}/{} seeds follow the child order; chance (1/{}!)^{} = {:.3e}",
            s.rule, s.learned_threshold, s.n_matching_seeds, s.n_seeds, s.k_stages, s.n_matching_seeds, s.chance_probability
        );
    }
    for issue in &analysis.issues {
        let _ = writeln!(out, "Note: {issue}");
    }
    out
}

/// Figures and tables of one report, written under a single directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub files: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn build(
        m: &EvalMatrix,
        analysis: &Analysis,
        stages: Option<(&StageComparison, &LearnedGrid)>,
        run_meta_json: &str,
    ) -> Result<Self, TrajectoryError> {
        let mut files: Vec<(String, String)> = Vec::new();
        files.push(("run_meta.json".into(), run_meta_json.to_string()));
        files.push(("analysis.json".into(), analysis.to_json()));
        for (name, csv) in analysis.csv_tables() {
            files.push((name.to_string(), csv));
        }
        let curves = group_curves(m, &analysis.groups, analysis.settings.window)?;
        files.push(("group_curves.csv".into(), group_curves_csv(&m.steps, &curves)));
        files.push((FIG_ACQUISITION.into(), plot_acquisition_bars(analysis)));
        files.push((FIG_GROUPS.into(), plot_group_curves(&m.steps, &curves, &analysis.method_notes)));
        files.push((FIG_BIAS.into(), plot_bias(analysis)));
        let empty = LearnedGrid { stages: Vec::new(), agents: Vec::new(), cells: Vec::new() };
        let grid = stages.map_or(&empty, |s| s.1);
        files.push(("stage_matrix.csv".into(), grid.to_csv()));
        files.push((FIG_STAGES.into(), plot_stage_matrix(grid)));
        if let Some((cmp, _)) = stages {
            files.push(("stage_comparison.json".into(), cmp.to_json()));
        }
        files.push(("summary.txt".into(), summary_text(analysis, stages.map(|s| s.0))));
        Ok(ReportBundle { files })
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_str())
    }

    /// Writes every file, leaving identical existing files untouched.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            let path = dir.join(name);
            if std::fs::read(&path).is_ok_and(|old| old == body.as_bytes()) {
                continue;
            }
            std::fs::write(path, body)?;
        }
        Ok(())
    }
}
