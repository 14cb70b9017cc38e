//! Road layouts, vehicle drops, mobility and V2V link pairing.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lateral distance between a street centerline and each of its two lanes.
pub const LANE_OFFSET_M: f64 = 2.0;
pub const SPEED_MIN_MPS: f64 = 10.0;
pub const SPEED_MAX_MPS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub position: Point,
    pub speed: f64,
    /// Unit vector, always axis-aligned.
    pub heading: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct V2VLink {
    pub link_id: usize,
    pub tx: usize,
    pub rx: usize,
}

#[derive(Debug, Clone, Copy)]
struct Lane {
    origin: Point,
    heading: Point,
    len: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Grid of `blocks_x × blocks_y` blocks with a bidirectional street on every grid line.
    Manhattan {
        blocks_x: usize,
        blocks_y: usize,
        block_w_m: f64,
        block_h_m: f64,
    },
    /// One straight lane along +x starting at the origin; vehicles wrap at the end.
    Highway { len_m: f64 },
}

impl Default for Layout {
    fn default() -> Self {
        Layout::Manhattan {
            blocks_x: 1,
            blocks_y: 1,
            block_w_m: 250.0,
            block_h_m: 433.0,
        }
    }
}

impl Layout {
    fn width(&self) -> f64 {
        match *self {
            Layout::Manhattan {
                blocks_x, block_w_m, ..
            } => blocks_x as f64 * block_w_m,
            Layout::Highway { len_m } => len_m,
        }
    }

    fn height(&self) -> f64 {
        match *self {
            Layout::Manhattan {
                blocks_y, block_h_m, ..
            } => blocks_y as f64 * block_h_m,
            Layout::Highway { .. } => 0.0,
        }
    }

    /// Axis-aligned bounding box `(min, max)` that contains every lane.
    pub fn bounds(&self) -> (Point, Point) {
        match self {
            Layout::Manhattan { .. } => (
                Point::new(-LANE_OFFSET_M, -LANE_OFFSET_M),
                Point::new(self.width() + LANE_OFFSET_M, self.height() + LANE_OFFSET_M),
            ),
            Layout::Highway { len_m } => (Point::new(0.0, 0.0), Point::new(*len_m, 0.0)),
        }
    }

    pub fn center(&self) -> Point {
        Point::new(self.width() / 2.0, self.height() / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Layout::Manhattan {
                blocks_x,
                blocks_y,
                block_w_m,
                block_h_m,
            } => {
                if blocks_x == 0 {
                    return Err(Error::config("blocks_x", "must be >= 1"));
                }
                if blocks_y == 0 {
                    return Err(Error::config("blocks_y", "must be >= 1"));
                }
                if !(block_w_m > 0.0 && block_w_m.is_finite()) {
                    return Err(Error::config("block_w_m", "must be positive"));
                }
                if !(block_h_m > 0.0 && block_h_m.is_finite()) {
                    return Err(Error::config("block_h_m", "must be positive"));
                }
            }
            Layout::Highway { len_m } => {
                if !(len_m > 0.0 && len_m.is_finite()) {
                    return Err(Error::config("highway_len_m", "must be positive"));
                }
            }
        }
        Ok(())
    }

    fn lanes(&self) -> Vec<Lane> {
        match *self {
            Layout::Manhattan {
                blocks_x,
                blocks_y,
                block_w_m,
                block_h_m,
            } => {
                let (w, h) = (self.width(), self.height());
                let mut lanes = Vec::with_capacity(2 * (blocks_x + blocks_y + 2));
                for i in 0..=blocks_x {
                    let x = i as f64 * block_w_m;
                    lanes.push(Lane {
                        origin: Point::new(x + LANE_OFFSET_M, 0.0),
                        heading: Point::new(0.0, 1.0),
                        len: h,
                    });
                    lanes.push(Lane {
                        origin: Point::new(x - LANE_OFFSET_M, h),
                        heading: Point::new(0.0, -1.0),
                        len: h,
                    });
                }
                for j in 0..=blocks_y {
                    let y = j as f64 * block_h_m;
                    lanes.push(Lane {
                        origin: Point::new(0.0, y - LANE_OFFSET_M),
                        heading: Point::new(1.0, 0.0),
                        len: w,
                    });
                    lanes.push(Lane {
                        origin: Point::new(w, y + LANE_OFFSET_M),
                        heading: Point::new(-1.0, 0.0),
                        len: w,
                    });
                }
                lanes
            }
            Layout::Highway { len_m } => vec![Lane {
                origin: Point::new(0.0, 0.0),
                heading: Point::new(1.0, 0.0),
                len: len_m,
            }],
        }
    }

    /// True if `p` lies on some lane centerline (within `tol` meters).
    pub fn on_lane(&self, p: Point, tol: f64) -> bool {
        self.lanes().iter().any(|lane| {
            let (dx, dy) = (p.x - lane.origin.x, p.y - lane.origin.y);
            let along = dx * lane.heading.x + dy * lane.heading.y;
            let across = dx * lane.heading.y - dy * lane.heading.x;
            across.abs() <= tol && along >= -tol && along <= lane.len + tol
        })
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let (lo, hi) = self.bounds();
        p.x >= lo.x - tol && p.x <= hi.x + tol && p.y >= lo.y - tol && p.y <= hi.y + tol
    }

    /// Draws `count` points uniformly along the lane network, with the lane heading.
    fn drop_points<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<(Point, Point)> {
        let lanes = self.lanes();
        let pick = WeightedIndex::new(lanes.iter().map(|l| l.len)).expect("lanes have length");
        (0..count)
            .map(|_| {
                let lane = lanes[pick.sample(rng)];
                let s = rng.random::<f64>() * lane.len;
                let p = Point::new(lane.origin.x + s * lane.heading.x, lane.origin.y + s * lane.heading.y);
                (p, lane.heading)
            })
            .collect()
    }

    /// Positions of V2I uplink users (one per sub-band), dropped like vehicles.
    pub fn drop_v2i_users<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Point> {
        self.drop_points(count, rng).into_iter().map(|(p, _)| p).collect()
    }
}

/// Drops `n` vehicles uniformly along the lanes of `layout`.
pub fn spawn_vehicles<R: Rng + ?Sized>(n: usize, layout: &Layout, rng: &mut R) -> Result<Vec<Vehicle>> {
    if n < 2 {
        return Err(Error::config("n_vehicles", "need at least one V2V pair"));
    }
    layout.validate()?;
    let drops = layout.drop_points(n, rng);
    Ok(drops
        .into_iter()
        .enumerate()
        .map(|(id, (position, heading))| Vehicle {
            id,
            position,
            speed: rng.random_range(SPEED_MIN_MPS..=SPEED_MAX_MPS),
            heading,
        })
        .collect())
}

/// Advances every vehicle by `speed * dt` along its heading.
///
/// Highway vehicles wrap from the end of the road back to its start. Grid
/// vehicles drive straight through intersections and make a U-turn onto the
/// opposite lane of the same street when they reach the region edge.
pub fn step_positions(vehicles: &[Vehicle], layout: &Layout, dt: f64) -> Vec<Vehicle> {
    debug_assert!(dt > 0.0);
    vehicles
        .iter()
        .map(|v| {
            let mut v = v.clone();
            match *layout {
                Layout::Highway { len_m } => {
                    v.position.x = (v.position.x + v.speed * dt).rem_euclid(len_m);
                }
                Layout::Manhattan { .. } => {
                    let (w, h) = (layout.width(), layout.height());
                    let mut remaining = v.speed * dt;
                    while remaining > 0.0 {
                        let to_edge = match (v.heading.x, v.heading.y) {
                            (x, _) if x > 0.0 => w - v.position.x,
                            (x, _) if x < 0.0 => v.position.x,
                            (_, y) if y > 0.0 => h - v.position.y,
                            _ => v.position.y,
                        }
                        .max(0.0);
                        let d = remaining.min(to_edge);
                        v.position.x += d * v.heading.x;
                        v.position.y += d * v.heading.y;
                        remaining -= d;
                        if remaining > 0.0 {
                            // U-turn: move from the right-hand lane to the opposite one.
                            let (hx, hy) = (v.heading.x, v.heading.y);
                            v.position.x -= 2.0 * LANE_OFFSET_M * hy;
                            v.position.y += 2.0 * LANE_OFFSET_M * hx;
                            v.heading = Point::new(-hx, -hy);
                        }
                    }
                }
            }
            v
        })
        .collect()
}

/// Pairs every vehicle with its nearest other vehicle as receiver.
///
/// Links are returned ordered by transmitter id; `link_id` is the position in
/// that order. Distance ties go to the lower vehicle id.
pub fn form_links(vehicles: &[Vehicle]) -> Result<Vec<V2VLink>> {
    if vehicles.len() < 2 {
        return Err(Error::config("n_vehicles", "need at least one V2V pair"));
    }
    let mut order: Vec<&Vehicle> = vehicles.iter().collect();
    order.sort_by_key(|v| v.id);
    Ok(order
        .iter()
        .enumerate()
        .map(|(link_id, tx)| {
            let rx = order
                .iter()
                .filter(|o| o.id != tx.id)
                .map(|o| (tx.position.distance(o.position), o.id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, id)| id)
                .expect("at least one other vehicle");
            V2VLink { link_id, tx: tx.id, rx }
        })
        .collect())
}

/// For each link, the indices of the `count` links whose transmitters are
/// closest to that link's receiver (excluding the link itself).
pub fn neighbor_sets(vehicles: &[Vehicle], links: &[V2VLink], count: usize) -> Vec<Vec<usize>> {
    let pos = |id: usize| {
        vehicles
            .iter()
            .find(|v| v.id == id)
            .map(|v| v.position)
            .expect("link references a known vehicle")
    };
    links
        .iter()
        .map(|victim| {
            let rx = pos(victim.rx);
            let mut others: Vec<(f64, usize)> = links
                .iter()
                .filter(|l| l.link_id != victim.link_id)
                .map(|l| (pos(l.tx).distance(rx), l.link_id))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(count).map(|(_, i)| i).collect()
        })
        .collect()
}
