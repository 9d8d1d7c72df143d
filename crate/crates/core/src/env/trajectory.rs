//! Closed-loop UAV flight path with per-waypoint base-station coverage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one UAV-BS link at a waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsLink {
    /// BS index, 1-based (0 is the satellite).
    pub bs: usize,
    pub distance_m: f64,
    pub elevation_deg: f64,
    /// Epochs the UAV stays in coverage of `bs`, counting this waypoint.
    pub coverage_remaining: u32,
}

/// One location on the trajectory. The satellite is always reachable, so
/// only covering base stations are listed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "WaypointRecord", into = "WaypointRecord")]
pub struct Waypoint {
    pub links: Vec<BsLink>,
}

/// File form of a waypoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointRecord {
    #[serde(default)]
    pub available_bs: Vec<usize>,
    #[serde(default)]
    pub bs_geometry: Vec<(f64, f64)>,
    #[serde(default)]
    pub coverage_remaining: Vec<u32>,
}

impl TryFrom<WaypointRecord> for Waypoint {
    type Error = Error;

    fn try_from(rec: WaypointRecord) -> Result<Self> {
        let n = rec.available_bs.len();
        if rec.bs_geometry.len() != n || rec.coverage_remaining.len() != n {
            return Err(Error::Config(format!(
                "waypoint lists differ in length: available_bs={}, bs_geometry={}, coverage_remaining={}",
                n,
                rec.bs_geometry.len(),
                rec.coverage_remaining.len()
            )));
        }
        let links = rec
            .available_bs
            .iter()
            .zip(&rec.bs_geometry)
            .zip(&rec.coverage_remaining)
            .map(|((&bs, &(x, theta)), &k)| BsLink {
                bs,
                distance_m: x,
                elevation_deg: theta,
                coverage_remaining: k,
            })
            .collect();
        Ok(Self { links })
    }
}

impl From<Waypoint> for WaypointRecord {
    fn from(w: Waypoint) -> Self {
        Self {
            available_bs: w.links.iter().map(|l| l.bs).collect(),
            bs_geometry: w.links.iter().map(|l| (l.distance_m, l.elevation_deg)).collect(),
            coverage_remaining: w.links.iter().map(|l| l.coverage_remaining).collect(),
        }
    }
}

impl Waypoint {
    pub fn link(&self, bs: usize) -> Option<&BsLink> {
        self.links.iter().find(|l| l.bs == bs)
    }

    pub fn covers(&self, bs: usize) -> bool {
        self.link(bs).is_some()
    }

    /// Available destinations in ascending order, satellite (0) first.
    pub fn available_set(&self) -> Vec<usize> {
        let mut set: Vec<usize> = std::iter::once(0).chain(self.links.iter().map(|l| l.bs)).collect();
        set.sort_unstable();
        set
    }
}

/// A contiguous coverage interval used to author trajectories.
#[derive(Debug, Clone)]
pub struct CoverageRun {
    pub bs: usize,
    pub start: usize,
    /// (distance m, elevation deg) for each covered waypoint, in flight order.
    pub geometry: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Self {
        Self { waypoints }
    }

    /// Builds a loop of `len` waypoints from coverage runs; remaining
    /// coverage counts are derived from run lengths. Runs may wrap.
    pub fn from_runs(len: usize, runs: &[CoverageRun]) -> Result<Self> {
        let mut waypoints = vec![Waypoint::default(); len];
        for run in runs {
            let run_len = run.geometry.len();
            if run_len == 0 || run_len > len {
                return Err(Error::Config(format!("coverage run for BS {} has bad length", run.bs)));
            }
            for (i, &(x, theta)) in run.geometry.iter().enumerate() {
                let wp = &mut waypoints[(run.start + i) % len];
                if wp.covers(run.bs) {
                    return Err(Error::Config(format!("BS {} listed twice at a waypoint", run.bs)));
                }
                wp.links.push(BsLink {
                    bs: run.bs,
                    distance_m: x,
                    elevation_deg: theta,
                    coverage_remaining: (run_len - i) as u32,
                });
            }
        }
        for wp in &mut waypoints {
            wp.links.sort_by_key(|l| l.bs);
        }
        let traj = Self { waypoints };
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn waypoint(&self, loc: usize) -> &Waypoint {
        &self.waypoints[loc % self.waypoints.len()]
    }

    pub fn next(&self, loc: usize) -> usize {
        (loc + 1) % self.waypoints.len()
    }

    /// Checks index ranges, positive geometry and that coverage counts
    /// agree with the waypoints that follow.
    pub fn validate(&self, num_bs: usize) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::Config("trajectory has no waypoints".into()));
        }
        let len = self.waypoints.len();
        for (t, wp) in self.waypoints.iter().enumerate() {
            for (i, l) in wp.links.iter().enumerate() {
                if l.bs == 0 {
                    return Err(Error::Config(format!(
                        "waypoint {t}: index 0 is the satellite and must not be listed in available_bs"
                    )));
                }
                if l.bs > num_bs {
                    return Err(Error::Config(format!(
                        "waypoint {t}: BS {} out of range 1..={num_bs}",
                        l.bs
                    )));
                }
                if wp.links[..i].iter().any(|o| o.bs == l.bs) {
                    return Err(Error::Config(format!("waypoint {t}: BS {} listed twice", l.bs)));
                }
                if !(l.distance_m > 0.0) || !l.elevation_deg.is_finite() {
                    return Err(Error::Config(format!(
                        "waypoint {t}: BS {} geometry must have x > 0 and finite elevation",
                        l.bs
                    )));
                }
                if l.coverage_remaining < 1 {
                    return Err(Error::Config(format!(
                        "waypoint {t}: coverage_remaining for BS {} must be >= 1",
                        l.bs
                    )));
                }
                for step in 1..l.coverage_remaining as usize {
                    let next = &self.waypoints[(t + step) % len];
                    match next.link(l.bs) {
                        Some(nl) if nl.coverage_remaining as usize == l.coverage_remaining as usize - step => {}
                        _ => {
                            return Err(Error::Config(format!(
                                "waypoint {t}: BS {} claims {} epochs of coverage but waypoint {} disagrees",
                                l.bs,
                                l.coverage_remaining,
                                (t + step) % len
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Hand-authored 12-waypoint loop over five base stations.
    pub fn default_loop() -> Self {
        let runs = [
            CoverageRun { bs: 1, start: 0, geometry: vec![(180.0, 4.0), (110.0, 6.5), (160.0, 4.8)] },
            CoverageRun { bs: 2, start: 2, geometry: vec![(200.0, 3.2), (95.0, 8.0)] },
            CoverageRun { bs: 3, start: 5, geometry: vec![(150.0, 5.5), (80.0, 9.5), (140.0, 5.9)] },
            CoverageRun { bs: 4, start: 8, geometry: vec![(120.0, 6.8), (170.0, 4.6)] },
            CoverageRun { bs: 5, start: 10, geometry: vec![(220.0, 3.0)] },
        ];
        Self::from_runs(12, &runs).expect("default trajectory is well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_loop_is_valid() {
        let t = Trajectory::default_loop();
        t.validate(5).unwrap();
        assert_eq!(t.len(), 12);
        assert_eq!(t.waypoint(2).available_set(), vec![0, 1, 2]);
        assert_eq!(t.waypoint(4).available_set(), vec![0]);
        assert_eq!(t.waypoint(5).link(3).unwrap().coverage_remaining, 3);
    }

    #[test]
    fn wrapping_run_counts_down_across_the_seam() {
        let t = Trajectory::from_runs(
            4,
            &[CoverageRun { bs: 1, start: 3, geometry: vec![(100.0, 5.0), (100.0, 5.0)] }],
        )
        .unwrap();
        t.validate(1).unwrap();
        assert_eq!(t.waypoint(3).link(1).unwrap().coverage_remaining, 2);
        assert_eq!(t.waypoint(0).link(1).unwrap().coverage_remaining, 1);
    }

    #[test]
    fn inconsistent_coverage_is_rejected() {
        let mut t = Trajectory::default_loop();
        t.waypoints[0].links[0].coverage_remaining = 5;
        assert!(t.validate(5).is_err());
    }

    #[test]
    fn satellite_index_in_file_is_rejected() {
        let wp = Waypoint {
            links: vec![BsLink { bs: 0, distance_m: 1.0, elevation_deg: 0.0, coverage_remaining: 1 }],
        };
        assert!(Trajectory::new(vec![wp]).validate(1).is_err());
    }
}
