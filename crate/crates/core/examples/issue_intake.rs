//! Serve the issue report API on a local port, submit a few reports over
//! HTTP and list them back.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use structex::intake::{router, IssueStore};

fn main() {
    let store = Arc::new(IssueStore::in_memory());
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(store.clone());
    runtime.spawn(async move { axum::serve(listener, app).await });

    let submissions = [
        r#"{"paperId":"2401.00001","snippet":"Figure 3 caption","description":"Alt text missing"}"#,
        r#"{"paperId":"2401.00001","snippet":"  figure 3  CAPTION","description":"No description on the figure"}"#,
        r#"{"paperId":"2401.00001","description":"Tables are hard to read"}"#,
    ];
    for body in submissions {
        println!("POST /reports -> {}", request(addr, "POST", "/reports", body));
    }
    println!("GET /reports/2401.00001 -> {}", request(addr, "GET", "/reports/2401.00001", ""));
    println!("stored {} reports, duplicates included", store.len());
}

/// Minimal blocking HTTP/1.1 client.
fn request(addr: SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    let req = format!(
        "{method} {path} HTTP/1.1\r\nhost: {addr}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let status = response.lines().next().unwrap_or_default().to_string();
    let payload = response.split("\r\n\r\n").nth(1).unwrap_or_default();
    format!("{status} {payload}")
}
