//! Mixed-integer linear model of the reduction problem.
//!
//! Binaries `x_<stop>` mark kept stops, continuous `dacc_<zone>` carry the
//! access time to the nearest kept candidate, and the "minimum over
//! candidates" definition of `dacc` is linearized with one selector binary
//! `y_<zone>_<stop>` per candidate and a per-zone big-M.
//!
//! The in-network constant (demand times shortest path between nearest
//! stops) is not part of the model objective; `MilpModel::pc_const` holds it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{evaluate_selection, StopSelection};
use crate::metrics::MetricsBundle;
use crate::rational::{parse_rational, scaled, to_decimal_string, to_f64, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Sense {
    fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }

    fn holds(self, lhs: Rational, rhs: Rational) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Ge => lhs >= rhs,
            Sense::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: BTreeMap<String, Rational>,
    pub sense: Sense,
    pub rhs: Rational,
}

impl LinearConstraint {
    fn new(name: String, sense: Sense, rhs: Rational) -> Self {
        LinearConstraint { name, terms: BTreeMap::new(), sense, rhs }
    }

    fn add(&mut self, var: &str, coef: Rational) {
        let entry = self.terms.entry(var.to_string()).or_insert_with(Rational::zero);
        *entry += coef;
        if entry.is_zero() {
            self.terms.remove(var);
        }
    }

    pub fn lhs(&self, values: &Assignment) -> Rational {
        self.terms
            .iter()
            .map(|(v, c)| *c * values.get(v).copied().unwrap_or_else(Rational::zero))
            .sum()
    }

    pub fn is_satisfied(&self, values: &Assignment) -> bool {
        self.sense.holds(self.lhs(values), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBound {
    pub var: String,
    pub lower: Rational,
    pub upper: Option<Rational>,
}

/// What a model variable stands for, keyed by its sanitized name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarRef {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zone: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<String>,
}

pub type Assignment = HashMap<String, Rational>;

#[derive(Debug, Clone)]
pub struct MilpModel {
    /// x variables in stop order followed by y variables in zone/candidate order.
    pub binaries: Vec<String>,
    pub continuous: Vec<String>,
    /// One term per zone, zero weights included.
    pub objective: Vec<(String, Rational)>,
    pub constraints: Vec<LinearConstraint>,
    pub bounds: Vec<VarBound>,
    pub big_m: Vec<i64>,
    pub pc_const: i64,
    pub x_vars: Vec<String>,
    /// Selector variables aligned with `MetricsBundle::candidates`.
    pub y_vars: Vec<Vec<String>>,
    pub dacc_vars: Vec<String>,
    pub names: BTreeMap<String, VarRef>,
    candidates: Vec<Vec<(usize, i64)>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Emit the delay constraint for every configured pair, including those implied by bounds.
    pub emit_all_pairs: bool,
}

/// Maps arbitrary ids onto `[A-Za-z0-9_]` and keeps names unique.
#[derive(Default)]
struct NameTable {
    used: HashSet<String>,
}

impl NameTable {
    fn claim(&mut self, base: String) -> String {
        if self.used.insert(base.clone()) {
            return base;
        }
        (2..)
            .map(|i| format!("{base}__{i}"))
            .find(|candidate| self.used.insert(candidate.clone()))
            .unwrap()
    }
}

pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

pub fn build_milp(metrics: &MetricsBundle) -> Result<MilpModel> {
    build_milp_with(metrics, BuildOptions::default())
}

pub fn build_milp_with(metrics: &MetricsBundle, options: BuildOptions) -> Result<MilpModel> {
    let (n_t, n_u) = (metrics.n_stops(), metrics.n_zones());
    if let Some(u) = (0..n_u).find(|&u| metrics.candidates[u].is_empty()) {
        return Err(Error::EmptyCandidates(metrics.zone_id(u).to_string()));
    }

    let stop_tok: Vec<String> = (0..n_t).map(|v| sanitize(metrics.stop_id(v))).collect();
    let zone_tok: Vec<String> = (0..n_u).map(|u| sanitize(metrics.zone_id(u))).collect();
    let mut vars = NameTable::default();
    let mut cons = NameTable::default();
    let mut names = BTreeMap::new();

    let x_vars: Vec<String> = (0..n_t)
        .map(|v| {
            let name = vars.claim(format!("x_{}", stop_tok[v]));
            names.insert(name.clone(), VarRef { zone: None, stop: Some(metrics.stop_id(v).into()) });
            name
        })
        .collect();
    let y_vars: Vec<Vec<String>> = (0..n_u)
        .map(|u| {
            metrics.candidates[u]
                .iter()
                .map(|&v| {
                    let name = vars.claim(format!("y_{}_{}", zone_tok[u], stop_tok[v]));
                    names.insert(
                        name.clone(),
                        VarRef { zone: Some(metrics.zone_id(u).into()), stop: Some(metrics.stop_id(v).into()) },
                    );
                    name
                })
                .collect()
        })
        .collect();
    let dacc_vars: Vec<String> = (0..n_u)
        .map(|u| {
            let name = vars.claim(format!("dacc_{}", zone_tok[u]));
            names.insert(name.clone(), VarRef { zone: Some(metrics.zone_id(u).into()), stop: None });
            name
        })
        .collect();

    let candidates: Vec<Vec<(usize, i64)>> = (0..n_u)
        .map(|u| metrics.candidates[u].iter().map(|&v| (v, metrics.access(u, v))).collect())
        .collect();
    let big_m: Vec<i64> = candidates
        .iter()
        .map(|c| c.iter().map(|&(_, d)| d).max().unwrap_or(0))
        .collect();

    let int = Rational::from_integer;
    let one = int(1);
    let mut constraints = Vec::new();

    for u in 0..n_u {
        let mut c = LinearConstraint::new(cons.claim(format!("cover_{}", zone_tok[u])), Sense::Ge, one);
        for &(v, _) in &candidates[u] {
            c.add(&x_vars[v], one);
        }
        constraints.push(c);
    }

    for u in 0..n_u {
        let m = int(big_m[u]);
        let dacc = &dacc_vars[u];
        for (i, &(v, d)) in candidates[u].iter().enumerate() {
            // dacc <= d + (1 - x) M
            let mut ub = LinearConstraint::new(
                cons.claim(format!("linUB_{}_{}", zone_tok[u], stop_tok[v])),
                Sense::Le,
                int(d) + m,
            );
            ub.add(dacc, one);
            ub.add(&x_vars[v], m);
            constraints.push(ub);

            // d + (1 - x) M - M (1 - y_v) - M sum_{v' != v} y_v' <= dacc
            let mut lb = LinearConstraint::new(
                cons.claim(format!("linLB_{}_{}", zone_tok[u], stop_tok[v])),
                Sense::Le,
                -int(d),
            );
            lb.add(&x_vars[v], -m);
            for (j, y) in y_vars[u].iter().enumerate() {
                lb.add(y, if i == j { m } else { -m });
            }
            lb.add(dacc, -one);
            constraints.push(lb);
        }
        let mut sum = LinearConstraint::new(cons.claim(format!("linSum_{}", zone_tok[u])), Sense::Eq, one);
        for y in &y_vars[u] {
            sum.add(y, one);
        }
        constraints.push(sum);
    }

    let alpha = metrics.alpha();
    for pair in &metrics.pairs {
        let (u1, u2) = (pair.u1, pair.u2);
        let rhs = scaled(alpha, pair.opt) - int(pair.pc);
        let implied = scaled(metrics.k(u1), metrics.d_acc[u1]) + scaled(metrics.k(u2), metrics.d_acc[u2]);
        if !options.emit_all_pairs && rhs >= implied {
            continue;
        }
        let mut c = LinearConstraint::new(
            cons.claim(format!("pair_{}_{}", zone_tok[u1], zone_tok[u2])),
            Sense::Le,
            rhs,
        );
        c.add(&dacc_vars[u1], one);
        c.add(&dacc_vars[u2], one);
        constraints.push(c);
    }

    let mut card = LinearConstraint::new(cons.claim("card".into()), Sense::Le, int(metrics.budget as i64));
    for x in &x_vars {
        card.add(x, one);
    }
    constraints.push(card);

    let bounds = (0..n_u)
        .map(|u| VarBound {
            var: dacc_vars[u].clone(),
            lower: Rational::zero(),
            upper: Some(scaled(metrics.k(u), metrics.d_acc[u])),
        })
        .collect();
    let objective = (0..n_u).map(|u| (dacc_vars[u].clone(), int(metrics.weight[u]))).collect();

    let mut binaries = x_vars.clone();
    binaries.extend(y_vars.iter().flatten().cloned());
    Ok(MilpModel {
        binaries,
        continuous: dacc_vars.clone(),
        objective,
        constraints,
        bounds,
        big_m,
        pc_const: metrics.pc_const,
        x_vars,
        y_vars,
        dacc_vars,
        names,
        candidates,
    })
}

impl MilpModel {
    pub fn objective_value(&self, values: &Assignment) -> Rational {
        self.objective
            .iter()
            .map(|(v, c)| *c * values.get(v).copied().unwrap_or_else(Rational::zero))
            .sum()
    }

    /// Names of the constraints and bounds violated by `values`; binaries
    /// outside {0, 1} are reported by variable name.
    pub fn violated(&self, values: &Assignment) -> Vec<String> {
        let mut out: Vec<String> = self
            .constraints
            .iter()
            .filter(|c| !c.is_satisfied(values))
            .map(|c| c.name.clone())
            .collect();
        let get = |v: &str| values.get(v).copied().unwrap_or_else(Rational::zero);
        for b in &self.bounds {
            let value = get(&b.var);
            if value < b.lower || b.upper.is_some_and(|ub| value > ub) {
                out.push(format!("bound:{}", b.var));
            }
        }
        for b in &self.binaries {
            let value = get(b);
            if value != Rational::zero() && value != Rational::from_integer(1) {
                out.push(format!("binary:{b}"));
            }
        }
        out
    }

    /// Encodes a kept-stop mask, setting each zone's `dacc` and selector to the
    /// values the linearization forces: the minimum over candidates of
    /// `d(u, v) + (1 - x_v) M_u`, selector on the first minimizer.
    pub fn forced_assignment(&self, kept: &[bool]) -> Assignment {
        let int = Rational::from_integer;
        let mut values = Assignment::new();
        for (v, name) in self.x_vars.iter().enumerate() {
            values.insert(name.clone(), int(kept[v] as i64));
        }
        for (u, cands) in self.candidates.iter().enumerate() {
            let m = self.big_m[u];
            let (best, value) = cands
                .iter()
                .enumerate()
                .map(|(i, &(v, d))| (i, d + if kept[v] { 0 } else { m }))
                .min_by_key(|&(i, x)| (x, i))
                .expect("non-empty candidate set");
            for (i, y) in self.y_vars[u].iter().enumerate() {
                values.insert(y.clone(), int((i == best) as i64));
            }
            values.insert(self.dacc_vars[u].clone(), int(value));
        }
        values
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Writes the sanitized-name to original-id map as JSON.
    pub fn write_name_map<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, &self.names)?;
        Ok(())
    }
}

fn format_number(value: Rational) -> String {
    to_decimal_string(value).unwrap_or_else(|| format!("{:.17e}", to_f64(value)))
}

fn write_expression(out: &mut String, terms: &mut dyn Iterator<Item = (&String, Rational)>, keep_zero: bool) {
    let mut line_len = out.len() - out.rfind('\n').map_or(0, |p| p + 1);
    let mut first = true;
    for (var, coef) in terms {
        if coef.is_zero() && !keep_zero {
            continue;
        }
        let sign = if coef.is_negative() { "-" } else { "+" };
        let magnitude = coef.abs();
        let term = if magnitude == Rational::from_integer(1) {
            var.clone()
        } else {
            format!("{} {}", format_number(magnitude), var)
        };
        let piece = match (first, coef.is_negative()) {
            (true, false) => term,
            (true, true) => format!("- {term}"),
            (false, _) => format!(" {sign} {term}"),
        };
        if line_len + piece.len() > 200 {
            out.push_str("\n   ");
            line_len = 3;
        }
        line_len += piece.len();
        out.push_str(&piece);
        first = false;
    }
    if first {
        out.push('0');
    }
}

/// Writes the model in LP text format.
pub fn export_lp<W: Write>(model: &MilpModel, mut sink: W) -> Result<()> {
    sink.write_all(format_lp(model).as_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn format_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    out.push_str("\\ stop-network reduction model\n");
    out.push_str("\\ objective excludes the in-network constant ");
    let _ = writeln!(out, "{}", model.pc_const);
    out.push_str("Minimize\n obj: ");
    if model.objective.is_empty() {
        out.push('0');
    }
    let mut obj = model.objective.iter().map(|(v, c)| (v, *c));
    let mut text = String::new();
    let mut first = true;
    for (var, coef) in &mut obj {
        let piece = if first { String::new() } else { " + ".to_string() };
        let _ = write!(text, "{piece}");
        if coef.is_negative() {
            let _ = write!(text, "- ");
        }
        let _ = write!(text, "{} {}", format_number(coef.abs()), var);
        first = false;
    }
    out.push_str(&text);
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}: ", c.name);
        write_expression(&mut out, &mut c.terms.iter().map(|(v, c)| (v, *c)), false);
        let _ = writeln!(out, " {} {}", c.sense.as_str(), format_number(c.rhs));
    }
    out.push_str("Bounds\n");
    for b in &model.bounds {
        match b.upper {
            Some(ub) => {
                let _ = writeln!(out, " {} <= {} <= {}", format_number(b.lower), b.var, format_number(ub));
            }
            None => {
                let _ = writeln!(out, " {} >= {}", b.var, format_number(b.lower));
            }
        }
    }
    out.push_str("Binary\n");
    for b in &model.binaries {
        let _ = writeln!(out, " {b}");
    }
    out.push_str("End\n");
    out
}

/// Contents of an LP file as read back by [`parse_lp`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedLp {
    pub objective: BTreeMap<String, Rational>,
    pub constraints: Vec<LinearConstraint>,
    pub bounds: Vec<VarBound>,
    pub binaries: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binary,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" => Some(Section::Bounds),
        "binary" | "binaries" | "bin" => Some(Section::Binary),
        "end" => Some(Section::End),
        _ => None,
    }
}

fn parse_sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

fn lp_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("lp: {}", msg.into()))
}

fn parse_terms(tokens: &[&str]) -> Result<BTreeMap<String, Rational>> {
    let mut terms = BTreeMap::new();
    let mut sign = Rational::from_integer(1);
    let mut coef: Option<Rational> = None;
    for &tok in tokens {
        match tok {
            "+" => {}
            "-" => sign = -sign,
            _ => {
                if let Ok(value) = parse_rational(tok) {
                    coef = Some(value);
                } else {
                    let c = sign * coef.take().unwrap_or(Rational::from_integer(1));
                    *terms.entry(tok.to_string()).or_insert_with(Rational::zero) += c;
                    sign = Rational::from_integer(1);
                }
            }
        }
    }
    if coef.is_some_and(|c| !c.is_zero()) {
        return Err(lp_err("dangling constant in expression"));
    }
    Ok(terms)
}

/// Reads the LP dialect written by [`export_lp`].
pub fn parse_lp(text: &str) -> Result<ParsedLp> {
    let mut parsed = ParsedLp::default();
    let mut section = Section::None;
    let mut pending: Vec<String> = Vec::new();

    let flush_constraint = |tokens: &mut Vec<String>, parsed: &mut ParsedLp| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let name = tokens[0]
            .strip_suffix(':')
            .ok_or_else(|| lp_err(format!("constraint without name near {:?}", tokens[0])))?
            .to_string();
        let body: Vec<&str> = tokens[1..].iter().map(String::as_str).collect();
        let pos = body
            .iter()
            .position(|t| parse_sense(t).is_some())
            .ok_or_else(|| lp_err(format!("constraint {name} has no sense")))?;
        if pos + 2 != body.len() {
            return Err(lp_err(format!("constraint {name} must end with a single rhs")));
        }
        let rhs = parse_rational(body[pos + 1]).map_err(lp_err)?;
        let terms = parse_terms(&body[..pos])?
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .collect();
        parsed.constraints.push(LinearConstraint { name, terms, sense: parse_sense(body[pos]).unwrap(), rhs });
        tokens.clear();
        Ok(())
    };

    for raw_line in text.lines() {
        let line = raw_line.split('\\').next().unwrap_or("");
        if let Some(next) = section_of(line) {
            if section == Section::Constraints {
                flush_constraint(&mut pending, &mut parsed)?;
            }
            if section == Section::Objective || next == Section::End {
                // objective fully buffered in `pending`
            }
            if section == Section::Objective {
                let toks: Vec<&str> = pending.iter().map(String::as_str).collect();
                let body = match toks.first() {
                    Some(t) if t.ends_with(':') => &toks[1..],
                    _ => &toks[..],
                };
                let cleaned: Vec<&str> = body.iter().copied().filter(|t| *t != "0" || body.len() > 1).collect();
                parsed.objective = parse_terms(&cleaned)?;
                pending.clear();
            }
            section = next;
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        match section {
            Section::None => return Err(lp_err("content before the first section")),
            Section::Objective => pending.extend(tokens.iter().map(|t| t.to_string())),
            Section::Constraints => {
                if tokens[0].ends_with(':') {
                    flush_constraint(&mut pending, &mut parsed)?;
                }
                pending.extend(tokens.iter().map(|t| t.to_string()));
            }
            Section::Bounds => {
                let bound = match tokens.as_slice() {
                    [lo, "<=", var, "<=", hi] => VarBound {
                        var: var.to_string(),
                        lower: parse_rational(lo).map_err(lp_err)?,
                        upper: Some(parse_rational(hi).map_err(lp_err)?),
                    },
                    [var, ">=", lo] => VarBound {
                        var: var.to_string(),
                        lower: parse_rational(lo).map_err(lp_err)?,
                        upper: None,
                    },
                    _ => return Err(lp_err(format!("unsupported bound line {line:?}"))),
                };
                parsed.bounds.push(bound);
            }
            Section::Binary => parsed.binaries.extend(tokens.iter().map(|t| t.to_string())),
            Section::End => return Err(lp_err("content after End")),
        }
    }
    if section != Section::End {
        return Err(lp_err("missing End"));
    }
    Ok(parsed)
}

/// Reads `name value` lines as produced by most solvers' plain solution dumps.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_values(text: &str) -> Result<HashMap<String, f64>> {
    let mut values = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("line {}: expected `name value`", lineno + 1)));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad value {value:?}", lineno + 1)))?;
        values.insert(name.to_string(), value);
    }
    Ok(values)
}

pub const INTEGRALITY_TOLERANCE: f64 = 1e-6;

/// Turns solver variable values into an evaluated selection.
///
/// Binaries missing from `values` are read as 0. The kept set is checked
/// against the model through its forced encoding; a disagreement between
/// model feasibility and direct evaluation (or between the two objective
/// values) is reported as [`Error::Consistency`].
pub fn decode_assignment(
    model: &MilpModel,
    values: &HashMap<String, f64>,
    metrics: &MetricsBundle,
) -> Result<StopSelection> {
    let mut rounded = HashMap::new();
    for name in &model.binaries {
        let value = values.get(name).copied().unwrap_or(0.0);
        let r = value.round();
        if (value - r).abs() > INTEGRALITY_TOLERANCE || !(r == 0.0 || r == 1.0) {
            return Err(Error::NonIntegral { name: name.clone(), value });
        }
        rounded.insert(name.as_str(), r == 1.0);
    }
    let kept_mask: Vec<bool> = model.x_vars.iter().map(|x| rounded[x.as_str()]).collect();
    let kept: Vec<usize> = (0..kept_mask.len()).filter(|&v| kept_mask[v]).collect();
    let selection = evaluate_selection(metrics, &kept)?;

    let encoded = model.forced_assignment(&kept_mask);
    let violated = model.violated(&encoded);
    if violated.is_empty() != selection.feasible {
        return Err(Error::Consistency(format!(
            "model violations {:?} vs evaluation violations {:?}",
            violated, selection.violations
        )));
    }
    if selection.feasible {
        let objective = model.objective_value(&encoded) + Rational::from_integer(model.pc_const);
        if objective != Rational::from_integer(selection.twt) {
            return Err(Error::Consistency(format!(
                "model objective {} + {} differs from twt {}",
                objective - Rational::from_integer(model.pc_const),
                model.pc_const,
                selection.twt
            )));
        }
    }
    Ok(selection)
}
