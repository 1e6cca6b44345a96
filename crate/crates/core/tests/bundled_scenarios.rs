//! The scenario files shipped with the repository.

use std::path::PathBuf;

use safeguard_core::plants::PlantRegistry;
use safeguard_core::runtime::{plan, run_episode, Termination};
use safeguard_core::scenario::{NetworkSource, ScenarioFile, Task};

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn robot_maze_reaches_its_goal_safely() {
    let path = scenario_dir().join("robot_maze.toml");
    let file = ScenarioFile::load(&path).unwrap();
    let r = file.resolve(&scenario_dir(), &PlantRegistry::with_builtin()).unwrap();
    let s = r.scenario;
    assert_eq!(s.unsafe_region.len(), 2);
    assert!(matches!(s.task, Task::Goal(_)));
    let setup = s.control_setup().unwrap();
    let p = plan(&s, &setup).unwrap();
    assert_eq!(p.waypoints.last().unwrap(), s.task.target());
    let log = run_episode(&s, &setup, &p.waypoints, 3).unwrap();
    assert_eq!(log.termination, Termination::GoalReached);
    assert!(log.safety_violations(&s.unsafe_region).is_empty());
}

#[test]
fn vehicle_corridor_describes_a_trained_model() {
    let file = ScenarioFile::load(&scenario_dir().join("vehicle_corridor.toml")).unwrap();
    assert_eq!(file.plant.kind, "vehicle");
    assert_eq!(file.network.source, NetworkSource::Train);
    let train = file.network.train.as_ref().unwrap();
    assert_eq!(train.hidden.as_deref(), Some(&[8, 4][..]));
    assert!(file.noise.eps_x.is_none());
    let (x, u) = file.sets().unwrap();
    assert_eq!((x.dim(), u.dim()), (3, 2));
}
