use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures::Fixture;
use crate::geometry::Pose;
use crate::map::{
    footprint_collides, load_map, Cell, Footprint, GridError, LaneletId, LaneletMap, MapError,
    OccupancyGrid, OrientedRect,
};
use crate::odd::{OddError, OddProfile};

/// A rectangle rasterized into the grid, optionally removed at a sim time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioObstacle {
    #[serde(flatten)]
    pub rect: OrientedRect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remove_at: Option<f64>,
}

impl ScenarioObstacle {
    pub fn present_at(&self, t: f64) -> bool {
        self.remove_at.map_or(true, |r| t < r)
    }
}

/// The on-disk scenario. File paths are relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub map_file: PathBuf,
    pub grid_file: PathBuf,
    pub start_pose: Pose,
    pub start_lanelet: LaneletId,
    pub goal_lanelet: LaneletId,
    #[serde(default)]
    pub obstacles: Vec<ScenarioObstacle>,
    /// Defaults to the built-in nominal profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_profile: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended_profile: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Odd(#[from] OddError),
    #[error("lanelet {0} is not in the map")]
    MissingLanelet(LaneletId),
    #[error("start pose is in collision")]
    StartInCollision,
    #[error("start pose is not on lanelet {0}")]
    StartOffLanelet(LaneletId),
}

/// A loaded, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub map: LaneletMap,
    /// Static grid before obstacles are injected.
    pub base_grid: OccupancyGrid,
    pub obstacles: Vec<ScenarioObstacle>,
    pub start_pose: Pose,
    pub start_lanelet: LaneletId,
    pub goal_lanelet: LaneletId,
    pub nominal: OddProfile,
    pub extended: OddProfile,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), ScenarioError> {
    fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let doc: ScenarioDocument =
            serde_json::from_str(&read(path)?).map_err(|e| ScenarioError::Parse {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
        Self::from_document(doc, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_document(doc: ScenarioDocument, base_dir: &Path) -> Result<Self, ScenarioError> {
        let profile = |p: &Option<PathBuf>, fallback: fn() -> OddProfile| match p {
            Some(p) => Ok::<_, ScenarioError>(OddProfile::from_json(&read(&base_dir.join(p))?)?),
            None => Ok(fallback()),
        };
        let scenario = Self {
            name: doc.name,
            description: doc.description,
            map: load_map(&read(&base_dir.join(&doc.map_file))?)?,
            base_grid: OccupancyGrid::from_json(&read(&base_dir.join(&doc.grid_file))?)?,
            obstacles: doc.obstacles,
            start_pose: doc.start_pose,
            start_lanelet: doc.start_lanelet,
            goal_lanelet: doc.goal_lanelet,
            nominal: profile(&doc.nominal_profile, OddProfile::nominal)?,
            extended: profile(&doc.extended_profile, OddProfile::extended)?,
        };
        scenario.validate(&Footprint::default())?;
        Ok(scenario)
    }

    pub fn from_fixture(f: &Fixture) -> Self {
        Self {
            name: f.name.to_owned(),
            description: f.description.to_owned(),
            map: f.map.clone(),
            base_grid: f.base_grid.clone(),
            obstacles: f
                .obstacles
                .iter()
                .map(|&rect| ScenarioObstacle {
                    rect,
                    remove_at: None,
                })
                .collect(),
            start_pose: f.start_pose,
            start_lanelet: f.start_lanelet,
            goal_lanelet: f.goal_lanelet,
            nominal: OddProfile::nominal(),
            extended: OddProfile::extended(),
        }
    }

    pub fn validate(&self, footprint: &Footprint) -> Result<(), ScenarioError> {
        for id in [self.start_lanelet, self.goal_lanelet] {
            if !self.map.contains(id) {
                return Err(ScenarioError::MissingLanelet(id));
            }
        }
        let start = self.map.lanelet(self.start_lanelet)?;
        if !start.polygon().contains(self.start_pose.position()) {
            return Err(ScenarioError::StartOffLanelet(self.start_lanelet));
        }
        if footprint_collides(&self.grid_at(0.0), &self.start_pose, footprint) {
            return Err(ScenarioError::StartInCollision);
        }
        Ok(())
    }

    /// The perceived grid at sim time `t`.
    pub fn grid_at(&self, t: f64) -> OccupancyGrid {
        let mut grid = self.base_grid.clone();
        for o in self.obstacles.iter().filter(|o| o.present_at(t)) {
            grid.fill_rect(&o.rect, Cell::Occupied);
        }
        grid
    }

    /// Writes `<stem>.scenario.json` plus its map and grid files into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<PathBuf, ScenarioError> {
        let map_file = PathBuf::from(format!("{stem}.map.json"));
        let grid_file = PathBuf::from(format!("{stem}.grid.json"));
        write(&dir.join(&map_file), &self.map.to_json())?;
        write(&dir.join(&grid_file), &self.base_grid.to_json())?;
        let doc = ScenarioDocument {
            name: self.name.clone(),
            description: self.description.clone(),
            map_file,
            grid_file,
            start_pose: self.start_pose,
            start_lanelet: self.start_lanelet,
            goal_lanelet: self.goal_lanelet,
            obstacles: self.obstacles.clone(),
            nominal_profile: None,
            extended_profile: None,
        };
        let path = dir.join(format!("{stem}.scenario.json"));
        let text = serde_json::to_string_pretty(&doc).expect("scenario serializes") + "\n";
        write(&path, &text)?;
        Ok(path)
    }
}
