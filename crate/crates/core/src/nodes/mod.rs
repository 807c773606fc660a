//! Node roles: RSMS, RNMS, NGDM, KDMS and the radio device, plus the
//! messages they exchange.

mod device;
mod join;
mod kdms;
mod keys;
mod label;
mod message;
mod rnms;
mod rsms;

use thiserror::Error;

use crate::container::ContainerError;
use crate::cryptosuite::{KeystreamError, SuiteId};
use crate::identity::IdentityError;
use crate::lifecycle::LifecycleError;

pub use device::{
    active_session_keys, device_load_fill, device_zeroize, DeviceState, LoadOutcome, Phase,
    ZeroizeScope, DEVICE_SNAPSHOT_MAGIC,
};
pub use join::{
    abort_join, join_request, joiner_handle_establish, joiner_handle_transfer, lead_handle_join,
    net_join, JoinError, JoinTranscript, JOIN_CHANNEL, NET_CHANNEL,
};
pub use kdms::{kdms_forward, DeliveryTrace, KdmsTree};
pub use keys::{
    combine_operational_keys, combine_shares, ngdm_generate_batch, BatchSpec, KeyPackage,
    KEY_PACKAGE_MAGIC,
};
pub use label::{ClassificationLabel, Compartment, Level};
pub use message::{Channel, Message, MsgType, SealedTransfer, MESSAGE_MAGIC};
pub use rnms::{rms_sync, PlanEntry, PlanningStore, RnmsState, RNMS_SNAPSHOT_MAGIC};
pub use rsms::{algorithm_update_entry, rsms_package_update, PackageUpdate, RsmsState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("a batch needs at least one key")]
    EmptyBatch,
    #[error("{0} is not registered")]
    UnknownSuite(SuiteId),
    #[error(transparent)]
    Keystream(#[from] KeystreamError),
    #[error("no shares to combine")]
    NoShares,
    #[error("share of {found} bytes, expected {expected}")]
    ShareLength { expected: usize, found: usize },
    #[error("shares from {0} and {1} cannot be combined")]
    SuiteMismatch(SuiteId, SuiteId),
    #[error("channel layout: {0}")]
    ChannelLayout(String),
    #[error("no channel named {0}")]
    UnknownChannel(String),
    #[error("key {0} already present")]
    DuplicateKey(String),
    #[error("phase {0} cannot move to {1}")]
    PhaseTransition(Phase, Phase),
    #[error("no operator session")]
    NoSession,
    #[error("role {0} may not {1}")]
    CapabilityDenied(String, String),
    #[error("header is addressed to {0}")]
    NotAddressee(String),
    #[error("entry {entry} is {label}, operator cleared for {clearance}")]
    Clearance {
        entry: String,
        label: ClassificationLabel,
        clearance: ClassificationLabel,
    },
    #[error("no compartment may hold {0} material")]
    NoCompartment(ClassificationLabel),
    #[error("entry {0} is not a key package: {1}")]
    BadKeyMaterial(String, String),
    #[error("no active net key for {0}")]
    NoNetKey(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("{to} is not below {from}")]
    NotDescendant { from: String, to: String },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Join(#[from] JoinError),
}

impl NodeError {
    /// Short hyphenated reason for logs and command-line output.
    pub fn reason(&self) -> &'static str {
        match self {
            NodeError::Container(e) => e.reason(),
            NodeError::Join(JoinError::Busy) => "channel-busy",
            NodeError::Join(JoinError::CertRejected(_)) => "certificate-rejected",
            NodeError::Join(_) => "join-failed",
            NodeError::Clearance { .. } => "clearance",
            NodeError::NoSession => "no-session",
            NodeError::CapabilityDenied(..)
            | NodeError::Identity(IdentityError::CapabilityDenied { .. }) => "capability-denied",
            NodeError::NoCompartment(_) => "no-compartment",
            NodeError::Lifecycle(_) => "lifecycle",
            _ => "rejected",
        }
    }
}
