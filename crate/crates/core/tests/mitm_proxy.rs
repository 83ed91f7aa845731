//! TCP interposer behavior: transparent pass-through with no rules,
//! value rewrites when rules are set.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;
use twinbed_core::attacks::{start_proxy, MitmRule, Transform};
use twinbed_core::tagbus::{
    encode_frame, serve, Client, Handler, Message, MessageKind, ServerHandle, TagValue, Value,
};

fn fixed_reply_server() -> (ServerHandle, std::net::SocketAddr) {
    let handler: Handler = Arc::new(|msg| match msg.kind {
        MessageKind::Read { tags } => {
            let mut out = BTreeMap::new();
            for tag in tags {
                let v = if tag == "CW_TEMP" { 14.77 } else { 1.0 };
                out.insert(tag.clone(), TagValue::float(&tag, v, 5_000));
            }
            Message::reply_ok(msg.id, out)
        }
        MessageKind::Write { writes } => {
            // Echo writes back under a different name so the test can see
            // what arrived upstream without the reply being rewritten too.
            let mut out = BTreeMap::new();
            for (name, tv) in writes {
                out.insert(format!("GOT_{name}"), tv);
            }
            Message::reply_ok(msg.id, out)
        }
        _ => Message::reply_ok(msg.id, BTreeMap::new()),
    });
    let handle = serve("127.0.0.1:0", handler).unwrap();
    let addr = handle.local_addr();
    (handle, addr)
}

#[test]
fn empty_rule_set_is_byte_exact_pass_through() {
    let (server, upstream) = fixed_reply_server();
    let proxy = start_proxy("127.0.0.1:0", upstream, Vec::new(), 0).unwrap();

    let request = encode_frame(&Message::read(
        7,
        vec!["CW_TEMP".to_string(), "SG_LEVEL".to_string()],
    ))
    .unwrap();

    let raw_reply = |addr: std::net::SocketAddr| -> Vec<u8> {
        let mut s = std::net::TcpStream::connect(addr).unwrap();
        s.write_all(&request).unwrap();
        let mut len = [0u8; 4];
        s.read_exact(&mut len).unwrap();
        let mut body = vec![0u8; u32::from_be_bytes(len) as usize];
        s.read_exact(&mut body).unwrap();
        [len.to_vec(), body].concat()
    };

    let direct = raw_reply(upstream);
    let proxied = raw_reply(proxy.local_addr);
    assert_eq!(direct, proxied, "pass-through must not alter bytes");

    proxy.shutdown();
    server.shutdown();
}

#[test]
fn set_value_rule_rewrites_reply_tag() {
    let (server, upstream) = fixed_reply_server();
    let rules = vec![MitmRule {
        tag: "CW_TEMP".to_string(),
        transform: Transform::SetValue(200.0),
    }];
    let proxy = start_proxy("127.0.0.1:0", upstream, rules, 0).unwrap();

    let mut direct = Client::connect(upstream).unwrap();
    let mut through = Client::connect(proxy.local_addr).unwrap();
    assert_eq!(
        direct.read_one("CW_TEMP").unwrap().value,
        Value::Float(14.77)
    );
    assert_eq!(
        through.read_one("CW_TEMP").unwrap().value,
        Value::Float(200.0)
    );
    // Untargeted tags pass unchanged.
    assert_eq!(
        through.read_one("SG_LEVEL").unwrap().value,
        Value::Float(1.0)
    );

    proxy.shutdown();
    server.shutdown();
}

#[test]
fn scale_rule_rewrites_writes_heading_upstream() {
    let (server, upstream) = fixed_reply_server();
    let rules = vec![MitmRule {
        tag: "FW_VALVE_CMD".to_string(),
        transform: Transform::Scale(0.5),
    }];
    let proxy = start_proxy("127.0.0.1:0", upstream, rules, 0).unwrap();

    let mut through = Client::connect(proxy.local_addr).unwrap();
    let mut writes = BTreeMap::new();
    writes.insert(
        "FW_VALVE_CMD".to_string(),
        TagValue::float("FW_VALVE_CMD", 0.8, 0),
    );
    // The upstream echoes what it received; the proxy halves it en route.
    let msg = Message::write(1, writes);
    let reply = {
        use twinbed_core::tagbus::read_frame;
        let mut s = std::net::TcpStream::connect(proxy.local_addr).unwrap();
        s.write_all(&encode_frame(&msg).unwrap()).unwrap();
        read_frame(&mut s).unwrap().unwrap()
    };
    let MessageKind::Reply { tags, .. } = reply.kind else {
        panic!("expected reply");
    };
    assert_eq!(tags["GOT_FW_VALVE_CMD"].value, Value::Float(0.4));
    drop(through.status()); // keep the client exercised through the proxy too

    proxy.shutdown();
    server.shutdown();
}

#[test]
fn rules_can_change_while_proxy_runs() {
    let (server, upstream) = fixed_reply_server();
    let proxy = start_proxy("127.0.0.1:0", upstream, Vec::new(), 0).unwrap();
    let mut client = Client::connect(proxy.local_addr).unwrap();
    assert_eq!(
        client.read_one("CW_TEMP").unwrap().value,
        Value::Float(14.77)
    );
    proxy.set_rules(vec![MitmRule {
        tag: "CW_TEMP".to_string(),
        transform: Transform::SetValue(99.0),
    }]);
    assert_eq!(
        client.read_one("CW_TEMP").unwrap().value,
        Value::Float(99.0)
    );
    proxy.shutdown();
    server.shutdown();
}
