//! Problem input: stop graph, urban zones, access times, demand and parameters.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::Read;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Number, Value};

use crate::error::{Error, Result};
use crate::rational::{self, from_json_number, round_half_up, serde_rational, Rational};

pub const DEFAULT_TIME_SCALE: u32 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub id: String,
    pub coord: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrbanZone {
    pub id: String,
    pub coord: Option<(f64, f64)>,
}

/// Undirected edge between two stop indices, cost in integer time units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitEdge {
    pub a: usize,
    pub b: usize,
    pub cost: i64,
}

/// Walking time from every zone to every stop, row-major by zone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessTimeTable {
    n_stops: usize,
    times: Vec<i64>,
}

impl AccessTimeTable {
    pub fn new(n_zones: usize, n_stops: usize, times: Vec<i64>) -> Self {
        assert_eq!(times.len(), n_zones * n_stops);
        Self { n_stops, times }
    }

    #[inline]
    pub fn get(&self, zone: usize, stop: usize) -> i64 {
        self.times[zone * self.n_stops + stop]
    }

    pub fn row(&self, zone: usize) -> &[i64] {
        &self.times[zone * self.n_stops..(zone + 1) * self.n_stops]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OdEntry {
    pub origin: usize,
    pub dest: usize,
    pub count: u64,
}

/// Which zone pairs the delay constraint is enforced on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSet {
    /// Every unordered pair, diagonal included.
    #[default]
    #[serde(rename = "all-pairs")]
    AllPairs,
    /// Only pairs with positive demand in either direction.
    #[serde(rename = "od-positive-only")]
    OdPositiveOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZoneFactor {
    Uniform(Rational),
    PerZone(Vec<Rational>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// Minimum fraction of stops to delete.
    pub p_elim: Rational,
    /// Admissible delay factor per zone pair.
    pub alpha: Rational,
    /// Admissible access time factor per zone.
    pub k: ZoneFactor,
    pub pairs: PairSet,
    pub time_scale: u32,
}

impl Parameters {
    pub fn k(&self, zone: usize) -> Rational {
        match &self.k {
            ZoneFactor::Uniform(k) => *k,
            ZoneFactor::PerZone(ks) => ks[zone],
        }
    }
}

/// A bus line: ordered stop indices as given in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub stops: Vec<usize>,
}

impl Line {
    /// Stop indices with duplicates removed, first occurrence order.
    pub fn unique_stops(&self) -> Vec<usize> {
        let mut seen = HashSet::new();
        self.stops.iter().copied().filter(|s| seen.insert(*s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub stops: Vec<Stop>,
    pub zones: Vec<UrbanZone>,
    pub edges: Vec<TransitEdge>,
    pub access: AccessTimeTable,
    pub od: Vec<OdEntry>,
    pub params: Parameters,
    pub lines: Vec<Line>,
    pub allow_disconnected: bool,
    stop_index: HashMap<String, usize>,
    zone_index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WarningKind {
    KBelowOne,
    DiagonalDemand,
    ZeroDemand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub kind: WarningKind,
    pub subject: Option<String>,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let subject = self.subject.as_deref().unwrap_or("");
        match self.kind {
            WarningKind::KBelowOne => write!(f, "k below 1 for {subject}"),
            WarningKind::DiagonalDemand => write!(f, "diagonal demand for {subject}"),
            WarningKind::ZeroDemand => write!(f, "zero total demand"),
        }
    }
}

impl Instance {
    pub fn n_stops(&self) -> usize {
        self.stops.len()
    }

    pub fn n_zones(&self) -> usize {
        self.zones.len()
    }

    pub fn stop_index(&self, id: &str) -> Option<usize> {
        self.stop_index.get(id).copied()
    }

    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zone_index.get(id).copied()
    }

    /// Resolves stop ids to indices.
    pub fn resolve_stops<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.stop_index(id.as_ref())
                    .ok_or_else(|| Error::UnknownStop(id.as_ref().to_string()))
            })
            .collect()
    }

    pub fn has_coordinates(&self) -> bool {
        self.stops.iter().all(|s| s.coord.is_some()) && self.zones.iter().all(|z| z.coord.is_some())
    }

    /// Returns a copy with different parameters. Per-zone `k` must match the zone count.
    pub fn with_params(&self, params: Parameters) -> Result<Instance> {
        check_params(&params, self.n_zones())?;
        let mut inst = self.clone();
        inst.params = params;
        Ok(inst)
    }

    /// Returns a copy with some `params` keys replaced, given in the
    /// instance format (`p_elim`, `alpha`, `k`, `constraint3_pairs`).
    /// `time_scale` cannot change after loading, so the echoed `params` of a
    /// solution can be applied back to its instance.
    pub fn with_param_overrides(&self, overrides: &Value) -> Result<Instance> {
        let Value::Object(changes) = overrides else {
            return Err(validation("parameter overrides must be an object"));
        };
        let mut merged = match self.params_json() {
            Value::Object(map) => map,
            _ => unreachable!("params serialize to an object"),
        };
        for (key, value) in changes {
            if key == "time_scale" && value.as_u64() != Some(self.params.time_scale as u64) {
                return Err(validation("time_scale cannot be overridden"));
            }
            merged.insert(key.clone(), value.clone());
        }
        let raw: RawParams =
            serde_json::from_value(Value::Object(merged)).map_err(|e| validation(e.to_string()))?;
        let params = params_from_raw(&raw, self.params.time_scale, &self.zones, &self.zone_index)?;
        let mut inst = self.clone();
        inst.params = params;
        Ok(inst)
    }

    /// Serializes to the JSON instance format. Times are written in input
    /// units (internal units divided by `time_scale`).
    pub fn to_json(&self) -> Value {
        let scale = self.params.time_scale as i64;
        let point = |id: &str, coord: Option<(f64, f64)>| {
            let mut obj = Map::new();
            obj.insert("id".into(), Value::String(id.to_string()));
            if let Some((x, y)) = coord {
                obj.insert("x".into(), json!(x));
                obj.insert("y".into(), json!(y));
            }
            Value::Object(obj)
        };
        let stops: Vec<Value> = self.stops.iter().map(|s| point(&s.id, s.coord)).collect();
        let zones: Vec<Value> = self.zones.iter().map(|z| point(&z.id, z.coord)).collect();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .map(|e| {
                json!({
                    "a": self.stops[e.a].id,
                    "b": self.stops[e.b].id,
                    "cost": time_to_json(e.cost, scale),
                })
            })
            .collect();
        let access = json!({
            "matrix": self.access.times.iter().map(|&t| time_to_json(t, scale)).collect::<Vec<_>>(),
            "zone_order": self.zones.iter().map(|z| z.id.clone()).collect::<Vec<_>>(),
            "stop_order": self.stops.iter().map(|s| s.id.clone()).collect::<Vec<_>>(),
        });
        let od: Vec<Value> = self
            .od
            .iter()
            .map(|e| json!({"o": self.zones[e.origin].id, "d": self.zones[e.dest].id, "n": e.count}))
            .collect();
        let params = self.params_json();
        let mut root = Map::new();
        root.insert("stops".into(), Value::Array(stops));
        root.insert("zones".into(), Value::Array(zones));
        root.insert("edges".into(), Value::Array(edges));
        root.insert("access".into(), access);
        root.insert("od".into(), Value::Array(od));
        root.insert("params".into(), params);
        if !self.lines.is_empty() {
            let lines: Vec<Value> = self
                .lines
                .iter()
                .map(|l| {
                    json!({
                        "id": l.id,
                        "stops": l.stops.iter().map(|&s| self.stops[s].id.clone()).collect::<Vec<_>>(),
                    })
                })
                .collect();
            root.insert("lines".into(), Value::Array(lines));
        }
        if self.allow_disconnected {
            root.insert("allow_disconnected".into(), Value::Bool(true));
        }
        Value::Object(root)
    }

    /// The `params` object of the instance format.
    pub fn params_json(&self) -> Value {
        let k = match &self.params.k {
            ZoneFactor::Uniform(k) => serde_rational::to_json(*k),
            ZoneFactor::PerZone(ks) => Value::Object(
                self.zones
                    .iter()
                    .zip(ks)
                    .map(|(z, k)| (z.id.clone(), serde_rational::to_json(*k)))
                    .collect(),
            ),
        };
        json!({
            "p_elim": serde_rational::to_json(self.params.p_elim),
            "alpha": serde_rational::to_json(self.params.alpha),
            "k": k,
            "constraint3_pairs": self.params.pairs,
            "time_scale": self.params.time_scale,
        })
    }

    /// Canonical bytes used for content hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_json()).expect("instance serializes")
    }

    pub fn content_hash(&self) -> String {
        crate::content_hash(&self.canonical_bytes())
    }
}

fn time_to_json(units: i64, scale: i64) -> Value {
    let value = Ratio::new(units, scale);
    if value.is_integer() {
        return Value::from(value.to_integer());
    }
    match rational::to_decimal_string(value) {
        Some(text) if text.len() <= 16 => serde_json::from_str(&text).unwrap_or(Value::Null),
        _ => json!(units as f64 / scale as f64),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    id: String,
    x: Option<f64>,
    y: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    a: String,
    b: String,
    cost: Number,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOd {
    o: String,
    d: String,
    n: Number,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    id: String,
    stops: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    p_elim: Value,
    alpha: Value,
    k: Value,
    constraint3_pairs: Option<PairSet>,
    time_scale: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    stops: Vec<RawPoint>,
    zones: Vec<RawPoint>,
    #[serde(default)]
    edges: Vec<RawEdge>,
    access: Value,
    #[serde(default)]
    od: Vec<RawOd>,
    params: RawParams,
    #[serde(default)]
    lines: Option<Vec<RawLine>>,
    #[serde(default)]
    allow_disconnected: bool,
}

/// Reads and validates an instance.
pub fn load_instance<R: Read>(mut source: R, format: Format) -> Result<Instance> {
    match format {
        Format::Json => {
            let mut text = String::new();
            source
                .read_to_string(&mut text)
                .map_err(|e| Error::Parse(e.to_string()))?;
            let raw: RawInstance =
                serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            from_raw(raw)
        }
    }
}

pub fn load_instance_str(text: &str) -> Result<Instance> {
    load_instance(text.as_bytes(), Format::Json)
}

fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn coord_of(p: &RawPoint) -> Result<Option<(f64, f64)>> {
    match (p.x, p.y) {
        (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok(Some((x, y))),
        (None, None) => Ok(None),
        _ => Err(validation(format!("incomplete coordinates for {}", p.id))),
    }
}

fn index_ids(points: &[RawPoint], what: &str) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        if p.id.is_empty() {
            return Err(validation(format!("empty {what} id")));
        }
        if index.insert(p.id.clone(), i).is_some() {
            return Err(validation(format!("duplicate {what} id {}", p.id)));
        }
    }
    Ok(index)
}

fn scaled_time(n: &Number, scale: u32, what: &str) -> Result<i64> {
    let value = from_json_number(n).map_err(|e| validation(format!("{what}: {e}")))?;
    if value < Rational::zero() {
        return Err(validation(format!("negative time for {what}")));
    }
    Ok(round_half_up(value * Ratio::from_integer(scale as i64)))
}

fn value_rational(v: &Value, what: &str) -> Result<Rational> {
    serde_rational::from_json(v).map_err(|e| validation(format!("{what}: {e}")))
}

fn check_params(params: &Parameters, n_zones: usize) -> Result<()> {
    if params.p_elim < Rational::zero() || params.p_elim > Rational::one() {
        return Err(validation("p_elim must lie in [0, 1]"));
    }
    if params.alpha < Rational::one() {
        return Err(validation("alpha must be at least 1"));
    }
    if params.time_scale == 0 {
        return Err(validation("time_scale must be positive"));
    }
    match &params.k {
        ZoneFactor::Uniform(k) if *k < Rational::zero() => Err(validation("k must be non-negative")),
        ZoneFactor::PerZone(ks) if ks.len() != n_zones => {
            Err(validation("per-zone k must cover every zone"))
        }
        ZoneFactor::PerZone(ks) if ks.iter().any(|k| *k < Rational::zero()) => {
            Err(validation("k must be non-negative"))
        }
        _ => Ok(()),
    }
}

fn params_from_raw(
    raw: &RawParams,
    time_scale: u32,
    zones: &[UrbanZone],
    zone_index: &HashMap<String, usize>,
) -> Result<Parameters> {
    let k = match &raw.k {
        Value::Object(map) => {
            let mut ks = vec![None; zones.len()];
            for (zone, v) in map {
                let zi = *zone_index
                    .get(zone)
                    .ok_or_else(|| validation(format!("k given for unknown zone {zone}")))?;
                ks[zi] = Some(value_rational(v, "k")?);
            }
            let ks = ks
                .into_iter()
                .enumerate()
                .map(|(i, k)| k.ok_or_else(|| validation(format!("k missing for zone {}", zones[i].id))))
                .collect::<Result<Vec<_>>>()?;
            ZoneFactor::PerZone(ks)
        }
        v => ZoneFactor::Uniform(value_rational(v, "k")?),
    };
    let params = Parameters {
        p_elim: value_rational(&raw.p_elim, "p_elim")?,
        alpha: value_rational(&raw.alpha, "alpha")?,
        k,
        pairs: raw.constraint3_pairs.unwrap_or_default(),
        time_scale,
    };
    check_params(&params, zones.len())?;
    Ok(params)
}

fn from_raw(raw: RawInstance) -> Result<Instance> {
    if raw.stops.is_empty() {
        return Err(validation("instance has no stops"));
    }
    if raw.zones.is_empty() {
        return Err(validation("instance has no zones"));
    }
    let stop_index = index_ids(&raw.stops, "stop")?;
    let zone_index = index_ids(&raw.zones, "zone")?;
    if let Some(z) = raw.zones.iter().find(|z| stop_index.contains_key(&z.id)) {
        return Err(validation(format!("id {} used for both a stop and a zone", z.id)));
    }

    let stops = raw
        .stops
        .iter()
        .map(|p| Ok(Stop { id: p.id.clone(), coord: coord_of(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let zones = raw
        .zones
        .iter()
        .map(|p| Ok(UrbanZone { id: p.id.clone(), coord: coord_of(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let stop_coords = stops.iter().filter(|s| s.coord.is_some()).count();
    if stop_coords != 0 && stop_coords != stops.len() {
        return Err(validation("coordinates must be given for all stops or none"));
    }
    let zone_coords = zones.iter().filter(|z| z.coord.is_some()).count();
    if zone_coords != 0 && zone_coords != zones.len() {
        return Err(validation("coordinates must be given for all zones or none"));
    }

    let time_scale = raw.params.time_scale.unwrap_or(DEFAULT_TIME_SCALE);
    if time_scale == 0 {
        return Err(validation("time_scale must be positive"));
    }
    let params = params_from_raw(&raw.params, time_scale, &zones, &zone_index)?;

    let lookup_stop = |id: &str| {
        stop_index
            .get(id)
            .copied()
            .ok_or_else(|| validation(format!("unknown stop {id}")))
    };
    let lookup_zone = |id: &str| {
        zone_index
            .get(id)
            .copied()
            .ok_or_else(|| validation(format!("unknown zone {id}")))
    };

    let mut edges = Vec::with_capacity(raw.edges.len());
    let mut seen_pairs = HashSet::new();
    for e in &raw.edges {
        let a = lookup_stop(&e.a)?;
        let b = lookup_stop(&e.b)?;
        if a == b {
            return Err(validation(format!("self-loop edge on {}", e.a)));
        }
        if !seen_pairs.insert((a.min(b), a.max(b))) {
            return Err(validation(format!("duplicate edge {}-{}", e.a, e.b)));
        }
        let cost = scaled_time(&e.cost, time_scale, &format!("edge {}-{}", e.a, e.b))?;
        edges.push(TransitEdge { a, b, cost });
    }

    let access = parse_access(&raw.access, &stops, &zones, &stop_index, &zone_index, time_scale)?;

    let mut od_counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for e in &raw.od {
        let o = lookup_zone(&e.o)?;
        let d = lookup_zone(&e.d)?;
        let n = e
            .n
            .as_u64()
            .ok_or_else(|| validation(format!("demand {}->{} must be a non-negative integer", e.o, e.d)))?;
        *od_counts.entry((o, d)).or_default() += n;
    }
    let od = od_counts
        .into_iter()
        .filter(|&(_, count)| count > 0)
        .map(|((origin, dest), count)| OdEntry { origin, dest, count })
        .collect();

    let mut lines = Vec::new();
    let mut line_ids = HashSet::new();
    for l in raw.lines.unwrap_or_default() {
        if !line_ids.insert(l.id.clone()) {
            return Err(validation(format!("duplicate line id {}", l.id)));
        }
        if l.stops.is_empty() {
            return Err(validation(format!("line {} has no stops", l.id)));
        }
        let stops = l.stops.iter().map(|s| lookup_stop(s)).collect::<Result<Vec<_>>>()?;
        lines.push(Line { id: l.id, stops });
    }

    let inst = Instance {
        stops,
        zones,
        edges,
        access,
        od,
        params,
        lines,
        allow_disconnected: raw.allow_disconnected,
        stop_index,
        zone_index,
    };
    if !inst.allow_disconnected {
        check_connected(&inst)?;
    }
    Ok(inst)
}

fn parse_access(
    raw: &Value,
    stops: &[Stop],
    zones: &[UrbanZone],
    stop_index: &HashMap<String, usize>,
    zone_index: &HashMap<String, usize>,
    time_scale: u32,
) -> Result<AccessTimeTable> {
    let (n_u, n_t) = (zones.len(), stops.len());
    let obj = raw
        .as_object()
        .ok_or_else(|| validation("access must be an object"))?;
    if let Some(eu) = obj.get("euclidean") {
        let speed = eu
            .get("walk_speed")
            .and_then(Value::as_f64)
            .ok_or_else(|| validation("euclidean access needs walk_speed"))?;
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(validation("walk_speed must be positive"));
        }
        let mut times = Vec::with_capacity(n_u * n_t);
        for z in zones {
            let (zx, zy) = z
                .coord
                .ok_or_else(|| validation(format!("zone {} has no coordinates", z.id)))?;
            for s in stops {
                let (sx, sy) = s
                    .coord
                    .ok_or_else(|| validation(format!("stop {} has no coordinates", s.id)))?;
                let dist = ((zx - sx).powi(2) + (zy - sy).powi(2)).sqrt();
                times.push((dist / speed * time_scale as f64 + 0.5).floor() as i64);
            }
        }
        return Ok(AccessTimeTable::new(n_u, n_t, times));
    }

    let matrix = obj
        .get("matrix")
        .ok_or_else(|| validation("access needs either matrix or euclidean"))?;
    let order = |key: &str, index: &HashMap<String, usize>, n: usize, what: &str| -> Result<Vec<usize>> {
        let Some(list) = obj.get(key) else {
            return Ok((0..n).collect());
        };
        let ids: Vec<String> = serde_json::from_value(list.clone())
            .map_err(|_| validation(format!("{key} must be a list of ids")))?;
        if ids.len() != n {
            return Err(validation(format!("{key} must list every {what} exactly once")));
        }
        let mut seen = HashSet::new();
        ids.iter()
            .map(|id| {
                let i = *index
                    .get(id)
                    .ok_or_else(|| validation(format!("unknown {what} {id}")))?;
                if !seen.insert(i) {
                    return Err(validation(format!("{key} repeats {id}")));
                }
                Ok(i)
            })
            .collect()
    };
    let zone_order = order("zone_order", zone_index, n_u, "zone")?;
    let stop_order = order("stop_order", stop_index, n_t, "stop")?;

    let flat: Vec<&Value> = match matrix {
        Value::Array(rows) if rows.iter().all(Value::is_array) => {
            if rows.len() != n_u {
                return Err(validation("access matrix must have one row per zone"));
            }
            let mut flat = Vec::with_capacity(n_u * n_t);
            for row in rows {
                let row = row.as_array().unwrap();
                if row.len() != n_t {
                    return Err(validation("access matrix row length must equal the stop count"));
                }
                flat.extend(row.iter());
            }
            flat
        }
        Value::Array(values) => values.iter().collect(),
        _ => return Err(validation("access matrix must be an array")),
    };
    if flat.len() != n_u * n_t {
        return Err(validation(format!(
            "access matrix has {} entries, expected {}",
            flat.len(),
            n_u * n_t
        )));
    }
    let mut times = vec![0i64; n_u * n_t];
    for (r, &zi) in zone_order.iter().enumerate() {
        for (c, &si) in stop_order.iter().enumerate() {
            let what = format!("access {}->{}", zones[zi].id, stops[si].id);
            let n = match flat[r * n_t + c] {
                Value::Number(n) => n,
                _ => return Err(validation(format!("{what} must be a finite number"))),
            };
            times[zi * n_t + si] = scaled_time(n, time_scale, &what)?;
        }
    }
    Ok(AccessTimeTable::new(n_u, n_t, times))
}

fn check_connected(inst: &Instance) -> Result<()> {
    let n = inst.n_stops();
    let mut adj = vec![Vec::new(); n];
    for e in &inst.edges {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(v) => Err(Error::Disconnected(inst.stops[0].id.clone(), inst.stops[v].id.clone())),
        None => Ok(()),
    }
}

/// Non-fatal observations about a loaded instance.
pub fn validate_instance(inst: &Instance) -> Vec<Warning> {
    let mut warnings = Vec::new();
    for (u, zone) in inst.zones.iter().enumerate() {
        if inst.params.k(u) < Rational::one() {
            warnings.push(Warning { kind: WarningKind::KBelowOne, subject: Some(zone.id.clone()) });
        }
    }
    for e in inst.od.iter().filter(|e| e.origin == e.dest) {
        warnings.push(Warning {
            kind: WarningKind::DiagonalDemand,
            subject: Some(inst.zones[e.origin].id.clone()),
        });
    }
    if inst.od.iter().all(|e| e.count == 0) {
        warnings.push(Warning { kind: WarningKind::ZeroDemand, subject: None });
    }
    warnings
}

/// Builder used by generators and tests to assemble an instance from
/// indices without going through JSON.
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    pub stops: Vec<Stop>,
    pub zones: Vec<UrbanZone>,
    pub edges: Vec<TransitEdge>,
    pub access: Vec<i64>,
    pub od: Vec<OdEntry>,
    pub params: Parameters,
    pub lines: Vec<Line>,
    pub allow_disconnected: bool,
}

impl InstanceBuilder {
    pub fn build(self) -> Result<Instance> {
        let raw_points = |ids: Vec<(&String, Option<(f64, f64)>)>| {
            ids.into_iter()
                .map(|(id, c)| RawPoint { id: id.clone(), x: c.map(|c| c.0), y: c.map(|c| c.1) })
                .collect::<Vec<_>>()
        };
        let stop_points = raw_points(self.stops.iter().map(|s| (&s.id, s.coord)).collect());
        let zone_points = raw_points(self.zones.iter().map(|z| (&z.id, z.coord)).collect());
        let stop_index = index_ids(&stop_points, "stop")?;
        let zone_index = index_ids(&zone_points, "zone")?;
        if self.access.len() != self.stops.len() * self.zones.len() {
            return Err(validation("access table size mismatch"));
        }
        if self.access.iter().any(|&t| t < 0) || self.edges.iter().any(|e| e.cost < 0) {
            return Err(validation("negative time"));
        }
        check_params(&self.params, self.zones.len())?;
        let mut od = self.od;
        od.sort();
        let inst = Instance {
            access: AccessTimeTable::new(self.zones.len(), self.stops.len(), self.access),
            stops: self.stops,
            zones: self.zones,
            edges: self.edges,
            od,
            params: self.params,
            lines: self.lines,
            allow_disconnected: self.allow_disconnected,
            stop_index,
            zone_index,
        };
        if !inst.allow_disconnected {
            check_connected(&inst)?;
        }
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    pub(crate) const T1: &str = include_str!("../tests/fixtures/t1.json");

    #[test]
    fn loads_t1() {
        let inst = load_instance_str(T1).unwrap();
        assert_eq!(inst.n_stops(), 3);
        assert_eq!(inst.n_zones(), 2);
        assert_eq!(inst.edges.len(), 2);
        assert_eq!(inst.access.row(0), &[1, 2, 5]);
        assert_eq!(inst.access.row(1), &[5, 2, 1]);
        assert_eq!(inst.params.k(0), Ratio::from_integer(2));
        assert_eq!(inst.lines.len(), 2);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn dangling_edge_is_named() {
        let text = T1.replace(r#""b": "v3""#, r#""b": "v9""#);
        let err = load_instance_str(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("v9"), "{err}");
    }

    #[test]
    fn single_stop_single_zone() {
        let text = r#"{"stops":[{"id":"s"}],"zones":[{"id":"z"}],"edges":[],
            "access":{"matrix":[[4.2]]},"od":[],"params":{"p_elim":0,"alpha":1,"k":2}}"#;
        let inst = load_instance_str(text).unwrap();
        assert_eq!(inst.n_stops(), 1);
        assert_eq!(inst.access.get(0, 0), 4200);
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            (r#""cost": 3}"#, r#""cost": -3}"#, "negative"),
            (r#""p_elim": 0.3"#, r#""p_elim": 1.5"#, "p_elim"),
            (r#""alpha": 2"#, r#""alpha": 0.5"#, "alpha"),
        ];
        for (from, to, needle) in cases {
            let text = T1.replacen(from, to, 1);
            assert_ne!(text, T1, "fixture pattern {from}");
            let err = load_instance_str(&text).unwrap_err();
            assert!(err.to_string().contains(needle), "{err}");
        }
        let dup = T1.replace(
            r#"{"a": "v2", "b": "v3", "cost": 3}"#,
            r#"{"a": "v2", "b": "v1", "cost": 3}"#,
        );
        assert!(load_instance_str(&dup).unwrap_err().to_string().contains("duplicate edge"));
        assert!(matches!(load_instance_str("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn disconnected_graph() {
        let text = T1.replace(r#", {"a": "v2", "b": "v3", "cost": 3}"#, "");
        assert!(matches!(load_instance_str(&text), Err(Error::Disconnected(_, _))));
        let allowed = text.replacen('{', r#"{"allow_disconnected": true, "#, 1);
        assert!(load_instance_str(&allowed).unwrap().allow_disconnected);
    }

    #[test]
    fn warnings() {
        let text = T1.replace(r#""k": 2"#, r#""k": {"u1": 0.5, "u2": 2}"#);
        let warnings = validate_instance(&load_instance_str(&text).unwrap());
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].to_string(), "k below 1 for u1");

        let text = T1.replace(
            r#"[{"o": "u1", "d": "u2", "n": 10}]"#,
            r#"[{"o": "u1", "d": "u2", "n": 10}, {"o": "u1", "d": "u1", "n": 5}]"#,
        );
        let warnings = validate_instance(&load_instance_str(&text).unwrap());
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].kind, WarningKind::DiagonalDemand);
        assert!(warnings[0].to_string().starts_with("diagonal demand"));
    }

    #[test]
    fn euclidean_access() {
        let text = r#"{"stops":[{"id":"a","x":0,"y":0},{"id":"b","x":3,"y":4}],
            "zones":[{"id":"z","x":0,"y":0}],"edges":[{"a":"a","b":"b","cost":1}],
            "access":{"euclidean":{"walk_speed":2}},"od":[],"params":{"p_elim":0,"alpha":1,"k":1}}"#;
        let inst = load_instance_str(text).unwrap();
        assert_eq!(inst.access.row(0), &[0, 2500]);
    }

    #[test]
    fn permuted_matrix_orders() {
        let text = r#"{"stops":[{"id":"a"},{"id":"b"}],"zones":[{"id":"z1"},{"id":"z2"}],
            "edges":[{"a":"a","b":"b","cost":1}],
            "access":{"matrix":[1,2,3,4],"zone_order":["z2","z1"],"stop_order":["b","a"]},
            "od":[],"params":{"p_elim":0,"alpha":1,"k":1,"time_scale":1}}"#;
        let inst = load_instance_str(text).unwrap();
        assert_eq!(inst.access.row(0), &[4, 3]);
        assert_eq!(inst.access.row(1), &[2, 1]);
    }

    #[test]
    fn param_overrides() {
        let inst = load_instance_str(T1).unwrap();
        let changed = inst
            .with_param_overrides(&json!({"p_elim": 0.6, "k": {"u1": 2, "u2": 0.5}, "constraint3_pairs": "od-positive-only"}))
            .unwrap();
        assert_eq!(changed.params.p_elim, Ratio::new(3, 5));
        assert_eq!(changed.params.alpha, inst.params.alpha);
        assert_eq!(changed.params.k(1), Ratio::new(1, 2));
        assert_eq!(changed.params.pairs, PairSet::OdPositiveOnly);
        assert!(inst.with_param_overrides(&json!({"alpha": 0.5})).is_err());
        assert!(inst.with_param_overrides(&json!({"time_scale": 10})).is_err());
        assert_eq!(inst.with_param_overrides(&changed.params_json()).unwrap(), changed);
        assert!(inst.with_param_overrides(&json!({"bogus": 1})).is_err());
        assert!(inst.with_param_overrides(&json!({"k": {"u1": 2}})).is_err());
    }

    #[test]
    fn round_trip_t1() {
        let inst = load_instance_str(T1).unwrap();
        let again = load_instance_str(&inst.to_json().to_string()).unwrap();
        assert_eq!(inst, again);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_random(seed in 0u64..10_000, scale in proptest::sample::select(vec![1u32, 7, 1000])) {
            let mut inst = synth::random_instance(seed, &synth::RandomSpec::default());
            inst.params.time_scale = scale;
            let text = inst.to_json().to_string();
            let again = load_instance_str(&text).unwrap();
            proptest::prop_assert_eq!(inst, again);
        }
    }
}
