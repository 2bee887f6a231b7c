use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::floorplan::{distance, Floorplan, Point};
use super::mobility_profile::MobilityProfile;
use crate::seed;

/// Per-second ground truth of one simulated subject-day.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rooms: Vec<usize>,
    pub positions: Vec<Point>,
    /// True while walking between rooms.
    pub walking: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rooms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rooms.is_empty()
    }

    fn push(&mut self, room: usize, pos: Point, walking: bool) {
        self.rooms.push(room);
        self.positions.push(pos);
        self.walking.push(walking);
    }
}

/// Standard deviation of the per-second positional jitter while dwelling.
const DWELL_JITTER_M: f64 = 0.25;

fn clamp_to_room(p: Point, center: Point, radius: f64) -> Point {
    let d = distance(p, center);
    if d <= radius || d == 0.0 {
        return p;
    }
    let s = radius / d;
    [center[0] + (p[0] - center[0]) * s, center[1] + (p[1] - center[1]) * s]
}

/// Semi-Markov walk over the room graph.
///
/// Dwell times are exponential with the room's mean (at least one second);
/// the next room is a uniformly random neighbour, reached in
/// `max(1, ceil(distance / speed))` seconds. Labels switch to the destination
/// once more than half of the walk is done.
pub fn simulate_trajectory(fp: &Floorplan, profile: &MobilityProfile, duration_s: usize, seed: u64) -> Trajectory {
    let mut rng = seed::rng(seed, &[0x7a1]);
    let dwell = profile.dwell_by_id(fp);
    let jitter = Normal::new(0.0, DWELL_JITTER_M).expect("valid sigma");
    let mut traj = Trajectory {
        rooms: Vec::with_capacity(duration_s),
        positions: Vec::with_capacity(duration_s),
        walking: Vec::with_capacity(duration_s),
    };
    let hub = fp.hub();
    let starts: Vec<usize> = (0..fp.num_rooms()).filter(|r| Some(*r) != hub).collect();
    let starts = if starts.is_empty() { vec![0] } else { starts };
    let mut room = starts[rng.random_range(0..starts.len())];
    let mut pos = fp.center(room);

    while traj.len() < duration_s {
        let stay = Exp::new(1.0 / dwell[room]).expect("positive dwell").sample(&mut rng);
        let stay = stay.ceil().clamp(1.0, (duration_s - traj.len()) as f64) as usize;
        let geom = &fp.geometry[room];
        for _ in 0..stay {
            let step = [pos[0] + jitter.sample(&mut rng), pos[1] + jitter.sample(&mut rng)];
            pos = clamp_to_room(step, geom.center, geom.radius);
            traj.push(room, pos, false);
        }
        if traj.len() >= duration_s {
            break;
        }
        let neighbors = fp.neighbors(room);
        if neighbors.is_empty() {
            continue;
        }
        let next = neighbors[rng.random_range(0..neighbors.len())];
        let dest_geom = &fp.geometry[next];
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let rad = rng.random_range(0.0..=0.5) * dest_geom.radius;
        let target = [dest_geom.center[0] + rad * ang.cos(), dest_geom.center[1] + rad * ang.sin()];
        let steps = (distance(pos, target) / profile.walk_speed_mps).ceil().max(1.0);
        let steps = if steps.is_finite() { steps as usize } else { 1 };
        let from = pos;
        for s in 1..=steps {
            if traj.len() >= duration_s {
                break;
            }
            let f = s as f64 / steps as f64;
            let p = [from[0] + f * (target[0] - from[0]), from[1] + f * (target[1] - from[1])];
            let label = if 2 * s > steps { next } else { room };
            traj.push(label, p, true);
        }
        pos = target;
        room = next;
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::default_floorplan;

    #[test]
    fn deterministic_under_seed() {
        let fp = default_floorplan();
        let p = MobilityProfile::healthy_control();
        let a = simulate_trajectory(&fp, &p, 2000, 9);
        assert_eq!(a, simulate_trajectory(&fp, &p, 2000, 9));
        assert_ne!(a, simulate_trajectory(&fp, &p, 2000, 10));
        assert_eq!(a.len(), 2000);
    }

    #[test]
    fn only_adjacent_transitions() {
        let fp = default_floorplan();
        for (seed, p) in [(1, MobilityProfile::healthy_control()), (2, MobilityProfile::parkinsonian())] {
            let t = simulate_trajectory(&fp, &p, 20_000, seed);
            for w in t.rooms.windows(2) {
                assert!(w[0] == w[1] || fp.is_adjacent(w[0], w[1]), "{w:?}");
            }
            assert!(t.rooms.windows(2).any(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn huge_dwell_never_moves() {
        let fp = default_floorplan();
        let mut p = MobilityProfile::healthy_control();
        p.mean_dwell_s.values_mut().for_each(|d| *d = 1e12);
        let t = simulate_trajectory(&fp, &p, 5000, 3);
        assert!(t.rooms.iter().all(|&r| r == t.rooms[0]));
        assert!(t.walking.iter().all(|w| !w));
    }

    #[test]
    fn infinite_speed_walks_take_one_second() {
        let fp = default_floorplan();
        let mut p = MobilityProfile::healthy_control();
        p.walk_speed_mps = f64::MAX;
        p.mean_dwell_s.values_mut().for_each(|d| *d = 20.0);
        let t = simulate_trajectory(&fp, &p, 5000, 4);
        let mut i = 0;
        let mut walks = 0;
        while i < t.len() {
            if t.walking[i] {
                let start = i;
                while i < t.len() && t.walking[i] {
                    i += 1;
                }
                assert_eq!(i - start, 1);
                assert_ne!(t.rooms[start], t.rooms[start - 1]);
                walks += 1;
            } else {
                i += 1;
            }
        }
        assert!(walks > 10);
    }
}
