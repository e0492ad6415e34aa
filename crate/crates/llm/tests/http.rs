use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use graph_teaching_llm::{
    ChatEndpoint, Decoding, EndpointConfig, EndpointError, HttpEndpoint, Message, Provider, Role,
};

/// Serves one canned response per entry, returning the request bodies seen.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<(String, String)>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                head.push_str(&line);
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            seen.push((head, String::from_utf8(req).unwrap()));
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

fn config(provider: Provider, base_url: String) -> EndpointConfig {
    EndpointConfig {
        name: "test".into(),
        provider,
        base_url,
        model: "m1".into(),
        api_key_env: None,
        decoding: Decoding::deterministic(),
        requests_per_minute: None,
        timeout_secs: 5,
    }
}

fn conversation() -> Vec<Message> {
    vec![Message::new(Role::System, "rules"), Message::new(Role::User, "teach")]
}

#[test]
fn openai_round_trip() {
    let reply = r#"{"choices":[{"message":{"role":"assistant","content":"I pick (5,7)"}}]}"#.to_owned();
    let (url, server) = serve(vec![(200, reply)]);
    let ep = HttpEndpoint::new(config(Provider::OpenAi, format!("{url}/v1")), Some("sk-test".into())).unwrap();
    assert_eq!(ep.complete(&conversation(), &Decoding::default()).unwrap(), "I pick (5,7)");
    let seen = server.join().unwrap();
    let (head, body) = &seen[0];
    assert!(head.starts_with("POST /v1/chat/completions"));
    assert!(head.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(body["model"], "m1");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
}

#[test]
fn anthropic_round_trip() {
    let reply = r#"{"content":[{"type":"text","text":"(5,7)"}]}"#.to_owned();
    let (url, server) = serve(vec![(200, reply)]);
    let ep = HttpEndpoint::new(config(Provider::Anthropic, url), Some("k".into())).unwrap();
    assert_eq!(ep.complete(&conversation(), &Decoding::default()).unwrap(), "(5,7)");
    let (head, body) = &server.join().unwrap()[0];
    assert!(head.starts_with("POST /v1/messages"));
    assert!(head.to_ascii_lowercase().contains("x-api-key: k"));
    assert!(body.contains(r#""system":"rules""#));
}

#[test]
fn status_codes_map_to_error_kinds() {
    let (url, server) = serve(vec![(503, "{}".into()), (429, "{}".into()), (400, r#"{"error":"bad"}"#.into())]);
    let ep = HttpEndpoint::new(config(Provider::Gemini, url), None).unwrap();
    let d = Decoding::default();
    assert!(matches!(ep.complete(&conversation(), &d), Err(EndpointError::Transport(_))));
    assert!(matches!(ep.complete(&conversation(), &d), Err(EndpointError::Transport(_))));
    assert!(matches!(ep.complete(&conversation(), &d), Err(EndpointError::Rejected { status: 400, .. })));
    let seen = server.join().unwrap();
    assert!(seen[0].0.starts_with("POST /v1beta/models/m1:generateContent"));
}

#[test]
fn unreachable_host_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let ep = HttpEndpoint::new(config(Provider::OpenAi, url), None).unwrap();
    assert!(matches!(ep.complete(&conversation(), &Decoding::default()), Err(EndpointError::Transport(_))));
}
