//! Map payloads for solved selections and scenarios.

use std::io::Write;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evaluate::{StopSelection, Subject};
use crate::metrics::MetricsBundle;
use crate::scenario::ScenarioResult;

fn point(coord: Option<(f64, f64)>) -> Value {
    let (x, y) = coord.expect("coordinates checked");
    json!({"type": "Point", "coordinates": [x, y]})
}

/// GeoJSON FeatureCollection: stops with status `kept`, `deleted` or
/// `scenario_removed`, zones with status `ok` or `violated`.
///
/// Without a scenario a zone is violated when the selection breaks its
/// access bound, leaves it unserved or breaks a delay pair involving it.
pub fn geojson(metrics: &MetricsBundle, selection: &StopSelection, scenario: Option<&ScenarioResult>) -> Result<Value> {
    let inst = &metrics.instance;
    if !inst.has_coordinates() {
        return Err(Error::MissingCoordinates("stops and zones".into()));
    }
    let mut features = Vec::new();
    for (v, stop) in inst.stops.iter().enumerate() {
        let status = match (selection.contains(v), scenario) {
            (false, _) => "deleted",
            (true, Some(s)) if s.v_s.binary_search(&v).is_err() => "scenario_removed",
            (true, _) => "kept",
        };
        features.push(json!({
            "type": "Feature",
            "geometry": point(stop.coord),
            "properties": {"kind": "stop", "id": stop.id, "status": status},
        }));
    }
    let mut violated = vec![false; inst.n_zones()];
    match scenario {
        Some(s) => s.violated.iter().for_each(|&u| violated[u] = true),
        None => {
            for v in &selection.violations {
                let zones: Vec<&String> = match &v.subject {
                    Subject::Zone(z) => vec![z],
                    Subject::Pair(a, b) => vec![a, b],
                    Subject::Count(_) => vec![],
                };
                for z in zones {
                    if let Some(u) = inst.zone_index(z) {
                        violated[u] = true;
                    }
                }
            }
        }
    }
    for (u, zone) in inst.zones.iter().enumerate() {
        features.push(json!({
            "type": "Feature",
            "geometry": point(zone.coord),
            "properties": {
                "kind": "zone",
                "id": zone.id,
                "status": if violated[u] { "violated" } else { "ok" },
            },
        }));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

pub fn emit_geojson<W: Write>(
    metrics: &MetricsBundle,
    selection: &StopSelection,
    scenario: Option<&ScenarioResult>,
    mut sink: W,
) -> Result<()> {
    let value = geojson(metrics, selection, scenario)?;
    serde_json::to_writer(&mut sink, &value)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// CSV rows `stop_id,status` matching the GeoJSON stop statuses.
pub fn write_stop_csv<W: Write>(
    metrics: &MetricsBundle,
    selection: &StopSelection,
    scenario: Option<&ScenarioResult>,
    sink: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["stop_id", "status"]).map_err(crate::metrics::csv_err)?;
    let mut order: Vec<usize> = (0..metrics.n_stops()).collect();
    metrics.sort_by_id(&mut order);
    for v in order {
        let status = match (selection.contains(v), scenario) {
            (false, _) => "deleted",
            (true, Some(s)) if s.v_s.binary_search(&v).is_err() => "scenario_removed",
            (true, _) => "kept",
        };
        w.write_record([metrics.stop_id(v), status]).map_err(crate::metrics::csv_err)?;
    }
    w.flush()?;
    Ok(())
}
