use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dataio::{RoomVocabulary, ACCESS_POINTS, DINING_ROOM, HALLWAY, KITCHEN, LIVING_ROOM, PORCH, STAIRS};
use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomGeometry {
    pub name: String,
    /// Metres.
    pub center: Point,
    /// Radius of the area a resident moves around in while dwelling.
    pub radius: f64,
}

/// Serialised floorplan: rooms, undirected adjacency by name, AP positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorplanSpec {
    pub rooms: Vec<RoomGeometry>,
    pub adjacency: Vec<[String; 2]>,
    pub access_points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Floorplan {
    pub rooms: RoomVocabulary,
    pub geometry: Vec<RoomGeometry>,
    adjacent: Vec<bool>,
    pub access_points: Vec<Point>,
}

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Floorplan {
    pub fn from_spec(spec: &FloorplanSpec) -> Result<Self> {
        let rooms = RoomVocabulary::new(spec.rooms.iter().map(|r| r.name.clone()).collect())?;
        let n = rooms.len();
        for (i, r) in spec.rooms.iter().enumerate() {
            if !(r.radius >= 0.0) || !r.center.iter().all(|c| c.is_finite()) {
                return Err(Error::Config(format!("floorplan.rooms[{i}]: invalid geometry")));
            }
        }
        if spec.access_points.len() != ACCESS_POINTS {
            return Err(Error::Config(format!(
                "floorplan.access_points: expected {ACCESS_POINTS}, got {}",
                spec.access_points.len()
            )));
        }
        let mut adjacent = vec![false; n * n];
        for (k, [a, b]) in spec.adjacency.iter().enumerate() {
            let ia = rooms.id(a).map_err(|e| Error::Config(format!("floorplan.adjacency[{k}]: {e}")))?;
            let ib = rooms.id(b).map_err(|e| Error::Config(format!("floorplan.adjacency[{k}]: {e}")))?;
            if ia == ib {
                return Err(Error::Config(format!("floorplan.adjacency[{k}]: self-loop on `{a}`")));
            }
            adjacent[ia * n + ib] = true;
            adjacent[ib * n + ia] = true;
        }
        let fp = Self {
            rooms,
            geometry: spec.rooms.clone(),
            adjacent,
            access_points: spec.access_points.clone(),
        };
        if !fp.is_connected() {
            return Err(Error::Config("floorplan.adjacency: room graph is not connected".into()));
        }
        Ok(fp)
    }

    pub fn to_spec(&self) -> FloorplanSpec {
        let n = self.num_rooms();
        let mut adjacency = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.is_adjacent(i, j) {
                    adjacency.push([self.rooms.name(i).to_string(), self.rooms.name(j).to_string()]);
                }
            }
        }
        FloorplanSpec {
            rooms: self.geometry.clone(),
            adjacency,
            access_points: self.access_points.clone(),
        }
    }

    pub fn num_rooms(&self) -> usize {
        self.rooms.len()
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacent[a * self.num_rooms() + b]
    }

    /// Unordered pairs of distinct rooms with no direct connection.
    pub fn non_adjacent_pairs(&self) -> Vec<[String; 2]> {
        let n = self.num_rooms();
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| !self.is_adjacent(a, b))
            .map(|(a, b)| [self.rooms.name(a).to_string(), self.rooms.name(b).to_string()])
            .collect()
    }

    pub fn neighbors(&self, room: usize) -> Vec<usize> {
        (0..self.num_rooms()).filter(|&j| self.is_adjacent(room, j)).collect()
    }

    pub fn center(&self, room: usize) -> Point {
        self.geometry[room].center
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_rooms();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(r) = queue.pop_front() {
            for j in self.neighbors(r) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Id of the hallway, if the plan has one.
    pub fn hub(&self) -> Option<usize> {
        self.rooms.id(HALLWAY).ok()
    }
}

/// Six-room ground floor with the hallway as hub and ten access points.
/// Coordinates are plausible placeholders, not a surveyed home.
pub fn default_floorplan_spec() -> FloorplanSpec {
    let room = |name: &str, center: Point, radius: f64| RoomGeometry {
        name: name.to_string(),
        center,
        radius,
    };
    FloorplanSpec {
        rooms: vec![
            room(KITCHEN, [2.0, 6.0], 1.5),
            room(LIVING_ROOM, [8.5, 4.0], 2.0),
            room(DINING_ROOM, [2.0, 2.0], 1.5),
            room(HALLWAY, [5.0, 4.0], 0.8),
            room(STAIRS, [5.0, 7.5], 0.6),
            room(PORCH, [5.0, 0.5], 0.7),
        ],
        adjacency: [KITCHEN, LIVING_ROOM, DINING_ROOM, STAIRS, PORCH]
            .iter()
            .map(|r| [HALLWAY.to_string(), r.to_string()])
            .collect(),
        access_points: vec![
            [0.5, 7.5],
            [3.2, 5.2],
            [10.0, 5.5],
            [7.5, 2.2],
            [0.5, 0.5],
            [3.2, 2.8],
            [5.6, 4.6],
            [4.4, 3.4],
            [5.0, 8.6],
            [5.0, -0.6],
        ],
    }
}

pub fn default_floorplan() -> Floorplan {
    Floorplan::from_spec(&default_floorplan_spec()).expect("default floorplan is valid")
}
