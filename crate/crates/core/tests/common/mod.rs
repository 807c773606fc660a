#![allow(dead_code)]

use sdrkms_core::cryptosuite::{generate_suite, AlgorithmSuite, SuiteRegistry};
use sdrkms_core::identity::{
    AdminCredentials, CapabilityList, DeviceTrust, Dongle, Identity, Role, TrustStore,
};
use sdrkms_core::nodes::{ClassificationLabel, DeviceState, RsmsState};

pub const PASSWORD: &str = "correct horse";

/// Searched 32-bit suite: depth-10 signature trees, no accidental forgeries.
pub fn suite() -> AlgorithmSuite {
    generate_suite(32, [7; 32]).unwrap()
}

pub fn rsms(suite: &AlgorithmSuite) -> RsmsState {
    let id = Identity::generate(
        "rsms",
        Role::Rsms,
        ClassificationLabel::NATO_SECRET,
        suite,
        [1; 32],
    )
    .unwrap();
    RsmsState::new(
        id,
        CapabilityList::default_policy(),
        SuiteRegistry::new(suite.clone()),
        0,
        10_000,
    )
    .unwrap()
}

pub fn channels() -> [(&'static str, ClassificationLabel); 2] {
    [
        ("x", ClassificationLabel::NATO_SECRET),
        ("y", ClassificationLabel::NATIONAL_CONFIDENTIAL),
    ]
}

pub fn device(
    rsms: &mut RsmsState,
    name: &str,
    clearance: ClassificationLabel,
    seed: u8,
) -> DeviceState {
    let suite = rsms.registry.active().clone();
    let id = Identity::generate(name, Role::Device, clearance, &suite, [seed; 32]).unwrap();
    let cert = rsms.certify(&id.subject_info(), 0, 5_000).unwrap();
    let trust = TrustStore::with_root(rsms.cert.clone()).unwrap();
    let mut d = DeviceState::new(
        id,
        cert,
        trust,
        SuiteRegistry::new(suite),
        CapabilityList::default_policy(),
        &channels(),
    )
    .unwrap();
    d.operator_trust = DeviceTrust::enrolling(["op-1"]);
    d
}

pub fn dongle(clearance: ClassificationLabel) -> Dongle {
    Dongle::provision(
        [3; 32],
        PASSWORD,
        &AdminCredentials {
            operator_id: "op-1".into(),
            role: Role::Operator,
            clearance,
        },
    )
}

pub fn logged_in(mut d: DeviceState, clearance: ClassificationLabel) -> DeviceState {
    d.login(&mut dongle(clearance), PASSWORD).unwrap();
    d
}
