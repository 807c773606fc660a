use std::fmt;

use crate::wire::{Reader, WireError, Writer};

pub const MESSAGE_MAGIC: &[u8; 4] = b"SMSG";
pub const MESSAGE_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MsgType {
    Container = 1,
    Header = 2,
    KeyPackage = 3,
    JoinRequest = 4,
    JoinChallenge = 5,
    SessionEstablish = 6,
    NetKeyTransfer = 7,
    SyncDigest = 8,
    SyncDelta = 9,
}

impl MsgType {
    pub const ALL: [MsgType; 9] = [
        MsgType::Container,
        MsgType::Header,
        MsgType::KeyPackage,
        MsgType::JoinRequest,
        MsgType::JoinChallenge,
        MsgType::SessionEstablish,
        MsgType::NetKeyTransfer,
        MsgType::SyncDigest,
        MsgType::SyncDelta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Container => "CONTAINER",
            MsgType::Header => "HEADER",
            MsgType::KeyPackage => "KEY_PACKAGE",
            MsgType::JoinRequest => "JOIN_REQUEST",
            MsgType::JoinChallenge => "JOIN_CHALLENGE",
            MsgType::SessionEstablish => "SESSION_ESTABLISH",
            MsgType::NetKeyTransfer => "NET_KEY_TRANSFER",
            MsgType::SyncDigest => "SYNC_DIGEST",
            MsgType::SyncDelta => "SYNC_DELTA",
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == v)
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Channel {
    X = 1,
    Y = 2,
    Wired = 3,
    Manual = 4,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::X, Channel::Y, Channel::Wired, Channel::Manual];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Wired => "WIRED",
            Channel::Manual => "MANUAL",
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| *c as u8 == v)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "x" | "X" => Ok(Channel::X),
            "y" | "Y" => Ok(Channel::Y),
            w if w.eq_ignore_ascii_case("wired") => Ok(Channel::Wired),
            m if m.eq_ignore_ascii_case("manual") => Ok(Channel::Manual),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

/// The ciphertext half of a net-key transfer. Only the join protocol can
/// build one, so a `NET_KEY_TRANSFER` body is never plaintext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedTransfer(pub(crate) Vec<u8>);

impl SealedTransfer {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// An immutable envelope between two nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    msg_type: MsgType,
    sender: String,
    receiver: String,
    channel: Channel,
    body: Vec<u8>,
}

impl Message {
    /// Any message type except `NET_KEY_TRANSFER`, which goes through
    /// [`Message::net_key_transfer`].
    pub fn new(
        msg_type: MsgType,
        sender: impl Into<String>,
        receiver: impl Into<String>,
        channel: Channel,
        body: Vec<u8>,
    ) -> Option<Self> {
        (msg_type != MsgType::NetKeyTransfer).then(|| Message {
            msg_type,
            sender: sender.into(),
            receiver: receiver.into(),
            channel,
            body,
        })
    }

    pub fn net_key_transfer(
        sender: impl Into<String>,
        receiver: impl Into<String>,
        channel: Channel,
        body: SealedTransfer,
    ) -> Self {
        Message {
            msg_type: MsgType::NetKeyTransfer,
            sender: sender.into(),
            receiver: receiver.into(),
            channel,
            body: body.0,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        self.msg_type
    }

    pub fn sender(&self) -> &str {
        &self.sender
    }

    pub fn receiver(&self) -> &str {
        &self.receiver
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// Same message, readdressed. Body and type are unchanged.
    pub fn forwarded(&self, sender: &str, receiver: &str, channel: Channel) -> Self {
        Message {
            msg_type: self.msg_type,
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            channel,
            body: self.body.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(MESSAGE_MAGIC, MESSAGE_FORMAT_VERSION);
        w.u8(self.msg_type as u8)
            .str16(&self.sender)
            .str16(&self.receiver)
            .u8(self.channel as u8)
            .bytes32(&self.body);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(MESSAGE_MAGIC)?;
        if version != MESSAGE_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let msg_type =
            MsgType::from_u8(r.u8()?).ok_or_else(|| WireError::invalid("msg_type", "unknown"))?;
        let sender = r.str16("sender")?;
        let receiver = r.str16("receiver")?;
        let channel =
            Channel::from_u8(r.u8()?).ok_or_else(|| WireError::invalid("channel", "unknown"))?;
        let body = r.bytes32()?.to_vec();
        r.finish()?;
        Ok(Message {
            msg_type,
            sender,
            receiver,
            channel,
            body,
        })
    }
}
