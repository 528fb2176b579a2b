//! Helpers shared by the HTTP provider clients.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

/// TCP-connect probe against the host of `endpoint`. Returns false on any
/// parse, resolution or connect failure, or when `timeout` elapses.
pub fn probe_endpoint(endpoint: &str, timeout: Duration) -> bool {
    let Ok(url) = reqwest::Url::parse(endpoint) else {
        return false;
    };
    let Some(host) = url.host_str() else {
        return false;
    };
    let Some(port) = url.port_or_known_default() else {
        return false;
    };
    let Ok(addrs) = (host, port).to_socket_addrs() else {
        return false;
    };
    addrs.into_iter().any(|addr| TcpStream::connect_timeout(&addr, timeout).is_ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn probe_sees_listening_socket() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        assert!(probe_endpoint(&format!("http://127.0.0.1:{port}/v1"), Duration::from_secs(1)));
        drop(listener);
        assert!(!probe_endpoint("not a url", Duration::from_millis(10)));
    }
}
