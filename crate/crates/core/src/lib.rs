//! Codified-key safety switch protocol for simulated autonomous platforms.
//!
//! Every sensing of a target produces a [`CodifiedKey`]. Keys are the only
//! thing that can invoke one of the fourteen switching rules; a key that
//! invokes more than one rule is a key clash and nothing is dispatched.

pub mod audit;
pub mod blackbox;
pub mod codec;
pub mod collab;
pub mod command;
pub mod conformance;
pub mod domain;
pub mod events;
pub mod key;
pub mod runner;
pub mod ooda;
pub mod sim;
pub mod switch;

pub use codec::{decode_key, encode_key, verify_key, EncodedKey, FaultKind, SegmentFault};
pub use domain::*;
pub use key::{embed_vicinity, CodifiedKey, KeyError, KeyFactory, KeyTriple};
pub use switch::{
    collect_invocations, dispatch, evaluate_rule, replicate_key, Action, ActionId, ActionKind,
    ActionState, CapturedBy, DispatchOutcome, Invocation, Mobility, PlatformContext, SwitchRuleId,
};
