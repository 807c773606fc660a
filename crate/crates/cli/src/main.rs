//! `sdrkms`: suites, identities, certificates, exchange containers and
//! scenario runs from the command line.
//!
//! Exit status is 0 on success, 1 on a domain error (one line on stderr,
//! `error: <reason>: <detail>`) and 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdrkms_core::container::{
    build_inner_archive, inspect_header, inspect_outer, issue_header, open_container,
    seal_container, ArchiveEntry, ContainerError, EntryType, FullContainer, OpenContext,
    RecipientHeader, Signer, FULL_MAGIC, HEADER_MAGIC,
};
use sdrkms_core::cryptosuite::arith::derive_seed;
use sdrkms_core::cryptosuite::{
    generate_suite_with, AlgorithmSuite, HashId, KeystreamError, SuiteOptions, SuiteRegistry,
    SymmetricKey, SUITE_MAGIC, SYMMETRIC_KEY_LEN,
};
use sdrkms_core::identity::{
    issue_certificate, verify_certificate, CapabilityList, Certificate, Identity, Role, TrustStore,
    Verdict, CERT_MAGIC, IDENTITY_MAGIC,
};
use sdrkms_core::nodes::ClassificationLabel;
use sdrkms_core::sim::{query_log, resolve_seed, run_scenario, validate_config, LogFilter};

const SEED_ENV: &str = "SDRKMS_SEED";
const TRANSPORT_KEY_ATTEMPTS: u32 = 16;

#[derive(Parser)]
#[command(name = "sdrkms", version, about = "SDR key management toolkit")]
struct Cli {
    /// Master seed for every random choice; falls back to $SDRKMS_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Algorithm suite parameters.
    #[command(subcommand)]
    Suite(SuiteCmd),
    /// Generate an identity (signer and encapsulation key pair).
    Keygen(KeygenArgs),
    /// Issue or verify certificates.
    #[command(subcommand)]
    Cert(CertCmd),
    /// Build an archive from a file and seal it into a signed container.
    Pack(PackArgs),
    /// Issue a recipient header for a sealed container.
    Header(HeaderArgs),
    /// Verify and decrypt a container with a recipient header.
    Open(OpenArgs),
    /// Describe a container, header, certificate, suite or key file.
    Inspect { file: PathBuf },
    /// Run a scenario and print its event log.
    Run(RunArgs),
    /// Query event logs.
    #[command(subcommand)]
    Log(LogCmd),
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// Generate a suite at the given security size.
    Gen {
        #[arg(long, default_value_t = 32)]
        bits: u32,
        #[arg(long, default_value_t = 1)]
        id: u16,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    id: String,
    #[arg(long, value_parser = parse_role)]
    role: Role,
    #[arg(long, default_value = "NATO_SECRET", value_parser = parse_label)]
    clearance: ClassificationLabel,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CertCmd {
    /// Certify the public half of `--subject` with `--issuer`. Without a
    /// subject the issuer certifies itself.
    Issue {
        #[arg(long)]
        issuer: PathBuf,
        #[arg(long)]
        subject: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        from: u64,
        #[arg(long, default_value_t = 1_000_000)]
        to: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a certificate against a trust root.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value_t = 0)]
        now: u64,
    },
}

#[derive(Args)]
struct PackArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    signer: PathBuf,
    #[arg(long, default_value = "suite.bin")]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the transport key; defaults to `<out>.tkey`.
    #[arg(long)]
    key_out: Option<PathBuf>,
    #[arg(long = "type", default_value = "WAVEFORM", value_parser = parse_entry_type)]
    entry_type: EntryType,
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "UNCLASSIFIED", value_parser = parse_label)]
    label: ClassificationLabel,
    /// Extra archive entries as `TYPE:path`.
    #[arg(long = "add")]
    extra: Vec<String>,
}

#[derive(Args)]
struct HeaderArgs {
    #[arg(long)]
    container: PathBuf,
    /// Transport key written by `pack`; defaults to `<container>.tkey`.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long)]
    recipient: PathBuf,
    #[arg(long)]
    issuer: PathBuf,
    #[arg(long)]
    root: PathBuf,
    #[arg(long, default_value_t = 0)]
    now: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OpenArgs {
    #[arg(long)]
    container: PathBuf,
    #[arg(long)]
    header: PathBuf,
    /// The recipient's identity file.
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    root: PathBuf,
    /// Suite files the recipient knows about.
    #[arg(long, required = true)]
    suite: Vec<PathBuf>,
    /// Certificates to cache before opening, e.g. the signer's.
    #[arg(long = "cert")]
    certs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    now: u64,
    /// Write the content of a single-entry archive here.
    #[arg(long, conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    /// Write every entry into this directory, named after the entry.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Also write the log here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LogCmd {
    /// Print the records of a log that match every given filter.
    Query {
        file: PathBuf,
        #[arg(long)]
        node: Option<String>,
        #[arg(long)]
        event: Option<String>,
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
    },
}

fn parse_role(s: &str) -> Result<Role, String> {
    s.parse()
}

fn parse_label(s: &str) -> Result<ClassificationLabel, String> {
    s.parse()
}

fn parse_entry_type(s: &str) -> Result<EntryType, String> {
    s.parse()
}

/// A domain error: a stable reason token and a human-readable detail.
#[derive(Debug)]
struct Failure {
    reason: String,
    detail: String,
}

impl Failure {
    fn new(reason: &str, detail: impl ToString) -> Self {
        Failure {
            reason: reason.to_string(),
            detail: detail.to_string().replace('\n', " "),
        }
    }
}

impl From<ContainerError> for Failure {
    fn from(e: ContainerError) -> Self {
        Failure::new(e.reason(), e)
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn load_suite(path: &Path) -> Result<AlgorithmSuite, Failure> {
    AlgorithmSuite::decode(&read(path)?)
        .map_err(|e| Failure::new("malformed", format!("{}: {e}", path.display())))
}

fn load_identity(path: &Path) -> Result<Identity, Failure> {
    Identity::decode_secret(&read(path)?)
        .map_err(|e| Failure::new("malformed", format!("{}: {e}", path.display())))
}

fn load_cert(path: &Path) -> Result<Certificate, Failure> {
    Certificate::decode(&read(path)?)
        .map_err(|e| Failure::new("malformed", format!("{}: {e}", path.display())))
}

fn trust_from(root: &Path) -> Result<TrustStore, Failure> {
    TrustStore::with_root(load_cert(root)?).map_err(|e| Failure::new("untrusted-root", e))
}

/// Tree signers are stateful: the key file is rewritten after every
/// signature so no leaf is used twice.
fn save_identity(path: &Path, id: &Identity) -> Outcome {
    write(path, &id.encode_secret())
}

fn encode_transport_key(key: &SymmetricKey) -> String {
    format!(
        "suite={} key={}\n",
        key.suite_id().0,
        hex::encode(key.as_bytes())
    )
}

fn decode_transport_key(text: &str) -> Option<SymmetricKey> {
    let mut suite = None;
    let mut key = None;
    for field in text.split_whitespace() {
        match field.split_once('=')? {
            ("suite", v) => suite = v.parse().ok(),
            ("key", v) => key = hex::decode(v).ok(),
            _ => return None,
        }
    }
    let key = key.filter(|k| k.len() == SYMMETRIC_KEY_LEN)?;
    SymmetricKey::from_slice(&key, sdrkms_core::cryptosuite::SuiteId(suite?))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

struct Seeds([u8; 32]);

impl Seeds {
    fn get(&self, label: &str) -> [u8; 32] {
        derive_seed(&self.0, label)
    }
}

fn suite_gen(seeds: &Seeds, bits: u32, id: u16, out: &Path) -> Outcome {
    let opts = SuiteOptions::new(bits, seeds.get("cli/suite")).suite_id(id);
    let (suite, _) = generate_suite_with(&opts).map_err(|e| Failure::new("invalid-suite", e))?;
    write(out, &suite.encode())?;
    println!("{} bits={bits} written={}", suite.suite_id, out.display());
    Ok(())
}

fn keygen(seeds: &Seeds, a: &KeygenArgs) -> Outcome {
    let suite = load_suite(&a.suite)?;
    let id = Identity::generate(
        &a.id,
        a.role,
        a.clearance,
        &suite,
        seeds.get(&format!("cli/identity/{}", a.id)),
    )
    .map_err(|e| Failure::new("invalid-suite", e))?;
    save_identity(&a.out, &id)?;
    println!(
        "{} role={} {} written={}",
        a.id,
        a.role.name(),
        suite.suite_id,
        a.out.display()
    );
    Ok(())
}

fn cert_issue(
    issuer_path: &Path,
    subject: Option<&Path>,
    from: u64,
    to: u64,
    out: &Path,
) -> Outcome {
    let mut issuer = load_identity(issuer_path)?;
    let subject = match subject {
        Some(p) => load_identity(p)?.subject_info(),
        None => issuer.subject_info(),
    };
    let caps = CapabilityList::default_policy();
    let cert = issue_certificate(&caps, &mut issuer, &subject, from, to).map_err(|e| {
        let reason = match e {
            sdrkms_core::identity::IdentityError::CapabilityDenied { .. } => "capability-denied",
            sdrkms_core::identity::IdentityError::Sign(_) => "signer-exhausted",
            _ => "invalid-certificate",
        };
        Failure::new(reason, e)
    })?;
    save_identity(issuer_path, &issuer)?;
    write(out, &cert.encode())?;
    println!(
        "{} issuer={} valid={from}..{to} written={}",
        cert.subject_id,
        cert.issuer_id,
        out.display()
    );
    Ok(())
}

fn cert_verify(cert: &Path, root: &Path, now: u64) -> Outcome {
    let cert = load_cert(cert)?;
    match verify_certificate(&cert, &trust_from(root)?, now) {
        Verdict::Accept => {
            println!("accept {}", cert.subject_id);
            Ok(())
        }
        Verdict::Reject(r) => Err(Failure::new(
            r.as_str(),
            format!("certificate for {}", cert.subject_id),
        )),
    }
}

fn pack(seeds: &Seeds, a: &PackArgs) -> Outcome {
    let suite = load_suite(&a.suite)?;
    let mut signer = load_identity(&a.signer)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.input
            .file_name()
            .map_or("entry".into(), |n| n.to_string_lossy().into_owned())
    });
    let mut entries = vec![ArchiveEntry::new(
        a.entry_type,
        name,
        a.label,
        read(&a.input)?,
    )];
    for spec in &a.extra {
        let (t, path) = spec
            .split_once(':')
            .ok_or_else(|| Failure::new("usage", format!("--add `{spec}` is not TYPE:path")))?;
        let t: EntryType = t.parse().map_err(|e| Failure::new("usage", e))?;
        let path = Path::new(path);
        let name = path
            .file_name()
            .map_or("entry".into(), |n| n.to_string_lossy().into_owned());
        entries.push(ArchiveEntry::new(t, name, a.label, read(path)?));
    }
    let archive = build_inner_archive(&entries).map_err(ContainerError::from)?;
    let id = signer.id.clone();
    let mut attempt = 0;
    let (container, key) = loop {
        let key = SymmetricKey::new(
            seeds.get(&format!("cli/transport/{attempt}")),
            suite.suite_id,
        );
        match seal_container(&archive, Signer::new(&id, &mut signer.signer), &suite, &key) {
            Ok(c) => break (c, key),
            Err(ContainerError::Keystream(KeystreamError::Rekey))
                if attempt + 1 < TRANSPORT_KEY_ATTEMPTS =>
            {
                attempt += 1
            }
            Err(e) => return Err(e.into()),
        }
    };
    save_identity(&a.signer, &signer)?;
    write(&a.out, &container.encode())?;
    let key_out = a
        .key_out
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".tkey"));
    write(&key_out, encode_transport_key(&key).as_bytes())?;
    println!(
        "container={} payload={} entries={} written={}",
        hex::encode(container.container_id),
        container.payload.len(),
        entries.len(),
        a.out.display()
    );
    Ok(())
}

fn header(seeds: &Seeds, a: &HeaderArgs) -> Outcome {
    let container = FullContainer::decode(&read(&a.container)?).map_err(ContainerError::Parse)?;
    let key_path = a
        .key
        .clone()
        .unwrap_or_else(|| with_suffix(&a.container, ".tkey"));
    let key_text = String::from_utf8(read(&key_path)?).unwrap_or_default();
    let key = decode_transport_key(&key_text).ok_or_else(|| {
        Failure::new(
            "malformed",
            format!("{}: not a transport key", key_path.display()),
        )
    })?;
    let recipient = load_cert(&a.recipient)?;
    let mut issuer = load_identity(&a.issuer)?;
    let trust = trust_from(&a.root)?;
    let id = issuer.id.clone();
    let h = issue_header(
        &container,
        &key,
        &recipient,
        &trust,
        a.now,
        Signer::new(&id, &mut issuer.signer),
        seeds.get(&format!("cli/header/{}", recipient.subject_id)),
    )?;
    save_identity(&a.issuer, &issuer)?;
    let bytes = h.encode();
    write(&a.out, &bytes)?;
    println!(
        "header recipient={} bytes={} written={}",
        h.recipient_id,
        bytes.len(),
        a.out.display()
    );
    Ok(())
}

fn safe_name(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        "entry".into()
    } else {
        s
    }
}

fn open(a: &OpenArgs) -> Outcome {
    let container = FullContainer::decode(&read(&a.container)?).map_err(ContainerError::Parse)?;
    let header = RecipientHeader::decode(&read(&a.header)?).map_err(ContainerError::Parse)?;
    let me = load_identity(&a.key)?;
    let mut trust = trust_from(&a.root)?;
    for c in &a.certs {
        trust
            .cache_certificate(load_cert(c)?, a.now)
            .map_err(|e| Failure::new("certificate-rejected", e))?;
    }
    let mut suites = a.suite.iter().map(|p| load_suite(p));
    let mut registry = SuiteRegistry::new(suites.next().expect("required")?);
    for s in suites {
        registry
            .register(s?)
            .map_err(|e| Failure::new("invalid-suite", e))?;
    }
    let ctx = OpenContext {
        trust: &trust,
        suites: &registry,
        now: a.now,
    };
    let opened = open_container(&container, &header, &me.encaps.secret, ctx)?;
    if let Some(out) = &a.out {
        let [entry] = opened.entries.as_slice() else {
            return Err(Failure::new(
                "usage",
                format!(
                    "archive has {} entries; use --out-dir",
                    opened.entries.len()
                ),
            ));
        };
        write(out, &entry.content)?;
    }
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::new("io", e))?;
        for e in &opened.entries {
            write(&dir.join(safe_name(&e.name)), &e.content)?;
        }
    }
    for e in &opened.entries {
        println!(
            "{} {} {} bytes={}",
            e.entry_type.name(),
            e.name,
            e.classification,
            e.content.len()
        );
    }
    Ok(())
}

fn inspect(path: &Path) -> Outcome {
    let bytes = read(path)?;
    let magic = bytes.get(..4).unwrap_or_default();
    let bad = |e: sdrkms_core::wire::WireError| Failure::new("malformed", e);
    if magic == FULL_MAGIC {
        let o = inspect_outer(&bytes).map_err(bad)?;
        println!(
            "container id={} {} signer={} payload={}",
            hex::encode(o.container_id),
            o.suite_id,
            o.signer_id,
            o.payload_len
        );
    } else if magic == HEADER_MAGIC {
        let h = inspect_header(&bytes).map_err(bad)?;
        println!(
            "header container={} recipient={} {} issuer={} bytes={}",
            hex::encode(h.container_id),
            h.recipient_id,
            h.suite_id,
            h.issuer_id,
            bytes.len()
        );
    } else if magic == CERT_MAGIC {
        let c = Certificate::decode(&bytes).map_err(bad)?;
        println!(
            "certificate subject={} role={} clearance={} issuer={} valid={}..{} {}",
            c.subject_id,
            c.role.name(),
            c.clearance,
            c.issuer_id,
            c.valid_from,
            c.valid_to,
            c.encaps_public.suite_id
        );
    } else if magic == SUITE_MAGIC {
        let s = AlgorithmSuite::decode(&bytes).map_err(bad)?;
        println!(
            "suite {} signature_modulus_bits={} hash={:?}",
            s.suite_id,
            s.sig.modulus_bits(),
            s.hash()
        );
    } else if magic == IDENTITY_MAGIC {
        let id = Identity::decode_secret(&bytes).map_err(bad)?;
        println!(
            "identity id={} role={} clearance={} signatures_left={}",
            id.id,
            id.role.name(),
            id.clearance,
            id.signer.remaining()
        );
    } else {
        return Err(Failure::new(
            "unknown-format",
            format!("{}: unrecognized magic", path.display()),
        ));
    }
    Ok(())
}

fn run(flag_seed: Option<u64>, a: &RunArgs) -> Outcome {
    let text = String::from_utf8(read(&a.scenario)?)
        .map_err(|_| Failure::new("invalid-scenario", "not UTF-8"))?;
    let cfg = validate_config(&text).map_err(|errs| {
        let joined: Vec<String> = errs.iter().map(ToString::to_string).collect();
        Failure::new("invalid-scenario", joined.join("; "))
    })?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(flag_seed, &cfg, env.as_deref());
    let out = run_scenario(&cfg, seed).map_err(|e| {
        let reason = match e {
            sdrkms_core::sim::SimError::Invariant(_) => "invariant-violated",
            _ => "setup-failed",
        };
        Failure::new(reason, e)
    })?;
    let log = out.log_text();
    if let Some(p) = &a.log {
        write(p, log.as_bytes())?;
    }
    print!("{log}");
    Ok(())
}

fn log_query(file: &Path, filter: &LogFilter) -> Outcome {
    let text = String::from_utf8(read(file)?)
        .map_err(|_| Failure::new("malformed", "log is not UTF-8"))?;
    for line in query_log(&text, filter) {
        println!("{line}");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    // Scenario runs resolve their own seed so the scenario file can carry one.
    let env_seed = std::env::var(SEED_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok());
    let seed = cli.seed.or(env_seed).unwrap_or(0);
    let seeds = Seeds(HashId::Sha256.digest(&[b"cli/master", &seed.to_be_bytes()]));
    match cli.command {
        Command::Suite(SuiteCmd::Gen { bits, id, out }) => suite_gen(&seeds, bits, id, &out),
        Command::Keygen(a) => keygen(&seeds, &a),
        Command::Cert(CertCmd::Issue {
            issuer,
            subject,
            from,
            to,
            out,
        }) => cert_issue(&issuer, subject.as_deref(), from, to, &out),
        Command::Cert(CertCmd::Verify { cert, root, now }) => cert_verify(&cert, &root, now),
        Command::Pack(a) => pack(&seeds, &a),
        Command::Header(a) => header(&seeds, &a),
        Command::Open(a) => open(&a),
        Command::Inspect { file } => inspect(&file),
        Command::Run(a) => run(cli.seed, &a),
        Command::Log(LogCmd::Query {
            file,
            node,
            event,
            from,
            to,
        }) => log_query(
            &file,
            &LogFilter {
                node,
                event,
                from,
                to,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.reason, f.detail);
            ExitCode::from(1)
        }
    }
}
