use super::frame::{encode_frame, read_frame};
use super::{BusError, Message, MessageKind, TagRead, TagValue, TagWrite};
use std::collections::BTreeMap;
use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};

/// Blocking tagbus client. One request in flight at a time; safe to hand
/// between threads but not to share concurrently.
pub struct Client {
    stream: TcpStream,
    next_id: u64,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, BusError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { stream, next_id: 1 })
    }

    fn round_trip(&mut self, kind: MessageKind) -> Result<Message, BusError> {
        let id = self.next_id;
        self.next_id += 1;
        let msg = Message { id, kind };
        self.stream.write_all(&encode_frame(&msg)?)?;
        let reply = read_frame(&mut self.stream)?.ok_or_else(|| {
            BusError::Transport(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed before reply",
            ))
        })?;
        if reply.id != id {
            return Err(BusError::Correlation {
                sent: id,
                got: reply.id,
            });
        }
        Ok(reply)
    }

    fn expect_ok(reply: Message) -> Result<BTreeMap<String, TagValue>, BusError> {
        match reply.kind {
            MessageKind::Reply { ok: true, tags, .. } => Ok(tags),
            MessageKind::Reply {
                ok: false, error, ..
            } => Err(BusError::Remote(
                error.unwrap_or_else(|| "unspecified".to_string()),
            )),
            _ => Err(BusError::UnexpectedReply),
        }
    }

    pub fn read(&mut self, tags: &[String]) -> Result<BTreeMap<String, TagValue>, BusError> {
        let reply = self.round_trip(MessageKind::Read {
            tags: tags.to_vec(),
        })?;
        Self::expect_ok(reply)
    }

    pub fn read_one(&mut self, tag: &str) -> Result<TagValue, BusError> {
        let mut tags = self.read(&[tag.to_string()])?;
        tags.remove(tag)
            .ok_or_else(|| BusError::Remote(format!("tag {tag} missing from reply")))
    }

    pub fn write(&mut self, tag: TagValue) -> Result<(), BusError> {
        let mut writes = BTreeMap::new();
        writes.insert(tag.name.clone(), tag);
        let reply = self.round_trip(MessageKind::Write { writes })?;
        Self::expect_ok(reply).map(|_| ())
    }

    pub fn status(&mut self) -> Result<BTreeMap<String, TagValue>, BusError> {
        let reply = self.round_trip(MessageKind::Status)?;
        Self::expect_ok(reply)
    }
}

impl TagRead for Client {
    fn read_tags(&mut self, tags: &[String]) -> Result<BTreeMap<String, TagValue>, BusError> {
        self.read(tags)
    }
}

impl TagWrite for Client {
    fn write_tag(&mut self, tag: TagValue) -> Result<(), BusError> {
        self.write(tag)
    }
}
