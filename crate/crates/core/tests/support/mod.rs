//! Local stand-in for a completion endpoint.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use gcodeloop::generation::template_generate;
use gcodeloop::prompt::params_from_prompt;

#[derive(Debug, Clone, Copy)]
pub enum Behavior {
    /// Answers every prompt with the template program for its parameters.
    Echo,
    /// Always 500.
    Fail,
    /// Sleeps before answering.
    Slow(Duration),
}

pub struct MockServer {
    pub url: String,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                thread::spawn(move || handle(stream, behavior));
            }
        });
        MockServer { url }
    }
}

fn read_body(stream: &TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream);
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

fn respond(mut stream: TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

fn handle(stream: TcpStream, behavior: Behavior) {
    let Some(body) = read_body(&stream) else {
        return;
    };
    match behavior {
        Behavior::Fail => respond(stream, "500 Internal Server Error", r#"{"error":"down"}"#),
        Behavior::Slow(d) => {
            thread::sleep(d);
            respond(stream, "200 OK", r#"{"text":"M30"}"#);
        }
        Behavior::Echo => {
            let prompt = serde_json::from_str::<serde_json::Value>(&body)
                .ok()
                .and_then(|v| v["prompt"].as_str().map(str::to_string))
                .unwrap_or_default();
            let text = params_from_prompt(&prompt)
                .and_then(|p| template_generate(&p).ok())
                .map(|g| format!("Here is the program:\n```gcode\n{g}```\n"))
                .unwrap_or_else(|| "no parameters".into());
            respond(
                stream,
                "200 OK",
                &serde_json::json!({ "text": text }).to_string(),
            );
        }
    }
}
