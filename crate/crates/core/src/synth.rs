//! Synthetic instance generators for tests, benchmarks and demos.

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{
    Instance, InstanceBuilder, Line, OdEntry, PairSet, Parameters, Stop, TransitEdge, UrbanZone,
    ZoneFactor,
};
use crate::rational::Rational;

#[derive(Debug, Clone)]
pub struct RandomSpec {
    pub stops: usize,
    pub zones: usize,
    /// Probability that an ordered zone pair carries demand.
    pub od_density: f64,
    pub p_elim: Rational,
    pub alpha: Rational,
    pub k: Rational,
    pub pairs: PairSet,
    /// Number of random lines to attach.
    pub lines: usize,
    /// Make access times pairwise distinct within every zone.
    pub distinct_access: bool,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            stops: 8,
            zones: 5,
            od_density: 0.3,
            p_elim: Ratio::new(1, 2),
            alpha: Ratio::from_integer(2),
            k: Ratio::from_integer(2),
            pairs: PairSet::AllPairs,
            lines: 0,
            distinct_access: false,
        }
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Random connected instance: stops and zones scattered in a 100x100
/// square, access times equal to rounded euclidean distances, a random
/// spanning tree plus a few chords as the stop graph, and sparse demand.
pub fn random_instance(seed: u64, spec: &RandomSpec) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| (rng.gen_range(0.0..100.0f64), rng.gen_range(0.0..100.0f64));
    let stops: Vec<Stop> = (0..spec.stops)
        .map(|i| Stop { id: format!("s{i:02}"), coord: Some(point(&mut rng)) })
        .collect();
    let zones: Vec<UrbanZone> = (0..spec.zones)
        .map(|i| UrbanZone { id: format!("z{i:02}"), coord: Some(point(&mut rng)) })
        .collect();

    let mut edges = Vec::new();
    let mut present = std::collections::HashSet::new();
    let edge_cost = |a: usize, b: usize| dist(stops[a].coord.unwrap(), stops[b].coord.unwrap()).round() as i64 + 1;
    for b in 1..spec.stops {
        let a = rng.gen_range(0..b);
        present.insert((a, b));
        edges.push(TransitEdge { a, b, cost: edge_cost(a, b) });
    }
    for _ in 0..spec.stops / 2 {
        let a = rng.gen_range(0..spec.stops);
        let b = rng.gen_range(0..spec.stops);
        let key = (a.min(b), a.max(b));
        if a != b && present.insert(key) {
            edges.push(TransitEdge { a: key.0, b: key.1, cost: edge_cost(key.0, key.1) });
        }
    }

    let mut access = Vec::with_capacity(spec.zones * spec.stops);
    for z in &zones {
        for (v, s) in stops.iter().enumerate() {
            let d = dist(z.coord.unwrap(), s.coord.unwrap()).round() as i64;
            access.push(if spec.distinct_access { d * spec.stops as i64 + v as i64 + 1 } else { d });
        }
    }

    let mut od = Vec::new();
    for o in 0..spec.zones {
        for d in 0..spec.zones {
            if rng.gen_bool(spec.od_density) {
                od.push(OdEntry { origin: o, dest: d, count: rng.gen_range(1..=20) });
            }
        }
    }

    let mut lines = Vec::new();
    let all: Vec<usize> = (0..spec.stops).collect();
    for i in 0..spec.lines {
        let len = rng.gen_range(1..=spec.stops.min(6));
        let mut stops_on_line: Vec<usize> = all.choose_multiple(&mut rng, len).copied().collect();
        stops_on_line.shuffle(&mut rng);
        lines.push(Line { id: format!("L{i}"), stops: stops_on_line });
    }

    InstanceBuilder {
        stops,
        zones,
        edges,
        access,
        od,
        params: Parameters {
            p_elim: spec.p_elim,
            alpha: spec.alpha,
            k: ZoneFactor::Uniform(spec.k),
            pairs: spec.pairs,
            time_scale: 1,
        },
        lines,
        allow_disconnected: false,
    }
    .build()
    .expect("generated instance is valid")
}

#[derive(Debug, Clone)]
pub struct CitySpec {
    pub rows: usize,
    pub cols: usize,
    pub zones: usize,
    /// Distance between neighbouring grid stops.
    pub spacing: f64,
    /// Ride time per distance unit relative to walking.
    pub ride_factor: f64,
    /// Typical walk inside a zone before reaching its centroid; added to every access time.
    pub zone_radius: f64,
    pub p_elim: Rational,
    pub alpha: Rational,
    pub k: Rational,
    pub od_density: f64,
}

impl Default for CitySpec {
    fn default() -> Self {
        CitySpec {
            rows: 6,
            cols: 10,
            zones: 100,
            spacing: 400.0,
            ride_factor: 0.25,
            zone_radius: 200.0,
            p_elim: Ratio::new(1, 2),
            alpha: Ratio::from_integer(2),
            k: Ratio::from_integer(2),
            od_density: 0.05,
        }
    }
}

/// Grid city: stops on a `rows x cols` lattice connected to their lattice
/// neighbours, zones scattered over the covered area, access times equal to
/// walking distances plus the zone radius, one line per lattice row and column.
pub fn grid_city(seed: u64, spec: &CitySpec) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = |r: usize, c: usize| r * spec.cols + c;
    let mut stops = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let jitter = spec.spacing * 0.15;
            let x = c as f64 * spec.spacing + rng.gen_range(-jitter..jitter);
            let y = r as f64 * spec.spacing + rng.gen_range(-jitter..jitter);
            stops.push(Stop { id: format!("r{r}c{c}"), coord: Some((x, y)) });
        }
    }
    let mut edges = Vec::new();
    let mut link = |a: usize, b: usize, stops: &[Stop]| {
        let cost = (dist(stops[a].coord.unwrap(), stops[b].coord.unwrap()) * spec.ride_factor).round() as i64;
        edges.push(TransitEdge { a, b, cost: cost.max(1) });
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if c + 1 < spec.cols {
                link(idx(r, c), idx(r, c + 1), &stops);
            }
            if r + 1 < spec.rows {
                link(idx(r, c), idx(r + 1, c), &stops);
            }
        }
    }
    let width = (spec.cols - 1) as f64 * spec.spacing;
    let height = (spec.rows - 1) as f64 * spec.spacing;
    let zones: Vec<UrbanZone> = (0..spec.zones)
        .map(|i| UrbanZone {
            id: format!("z{i:03}"),
            coord: Some((rng.gen_range(0.0..=width), rng.gen_range(0.0..=height))),
        })
        .collect();
    let mut access = Vec::with_capacity(spec.zones * stops.len());
    for z in &zones {
        for s in &stops {
            access.push((dist(z.coord.unwrap(), s.coord.unwrap()) + spec.zone_radius).round() as i64);
        }
    }
    let mut od = Vec::new();
    for o in 0..spec.zones {
        for d in 0..spec.zones {
            if o != d && rng.gen_bool(spec.od_density) {
                od.push(OdEntry { origin: o, dest: d, count: rng.gen_range(1..=50) });
            }
        }
    }
    let mut lines = Vec::new();
    for r in 0..spec.rows {
        lines.push(Line { id: format!("row{r}"), stops: (0..spec.cols).map(|c| idx(r, c)).collect() });
    }
    for c in 0..spec.cols {
        lines.push(Line { id: format!("col{c}"), stops: (0..spec.rows).map(|r| idx(r, c)).collect() });
    }
    InstanceBuilder {
        stops,
        zones,
        edges,
        access,
        od,
        params: Parameters {
            p_elim: spec.p_elim,
            alpha: spec.alpha,
            k: ZoneFactor::Uniform(spec.k),
            pairs: PairSet::AllPairs,
            time_scale: 1,
        },
        lines,
        allow_disconnected: false,
    }
    .build()
    .expect("generated city is valid")
}

/// Copy of `inst` with new `p_elim`.
pub fn with_p_elim(inst: &Instance, p_elim: Rational) -> Instance {
    let mut params = inst.params.clone();
    params.p_elim = p_elim;
    inst.with_params(params).expect("p_elim in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let spec = RandomSpec { lines: 3, ..RandomSpec::default() };
        assert_eq!(random_instance(5, &spec), random_instance(5, &spec));
        assert_ne!(random_instance(5, &spec), random_instance(6, &spec));
        let city = grid_city(1, &CitySpec::default());
        assert_eq!(city.n_stops(), 60);
        assert_eq!(city.n_zones(), 100);
        assert_eq!(city.lines.len(), 16);
    }

    #[test]
    fn distinct_access_is_distinct() {
        let spec = RandomSpec { distinct_access: true, ..RandomSpec::default() };
        let inst = random_instance(9, &spec);
        for u in 0..inst.n_zones() {
            let mut row = inst.access.row(u).to_vec();
            row.sort_unstable();
            row.dedup();
            assert_eq!(row.len(), inst.n_stops());
        }
    }
}
