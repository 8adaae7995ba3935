//! Search-and-rescue planning for a single UAV over a gridded map.
//!
//! The agent flies between cells of an `N x N` grid while a discrete belief
//! tracks where the targets may be. Planning runs POMCP and returns a short
//! action sequence from the tree; see [`planner::plan`].

pub mod baselines;
pub mod belief;
pub mod error;
pub mod grid;
pub mod height;
pub mod mission;
pub mod planner;
pub mod pomdp;
pub mod rollout;
pub mod scenario;
pub mod tree;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/maps.md")]
    pub struct Maps;
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/planner.md")]
    pub struct Planner;
    #[doc = include_str!("../../../book/src/rollout.md")]
    pub struct Rollout;
    #[doc = include_str!("../../../book/src/height.md")]
    pub struct Height;
    #[doc = include_str!("../../../book/src/missions.md")]
    pub struct Missions;
}
