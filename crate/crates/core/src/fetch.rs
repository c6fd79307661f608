//! Paginated issue download from a GitHub-compatible REST API.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::Value;

use crate::data::{self, IssueRecord, SkipNote};
use crate::error::FetchError;

pub const DEFAULT_API_BASE: &str = "https://api.github.com";
/// Environment variable consulted for the API token.
pub const TOKEN_ENV: &str = "SRGM_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Minimal blocking HTTP GET.
pub trait Transport {
    fn get(&self, url: &str, headers: &[(&str, String)]) -> Result<HttpResponse, FetchError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, headers: &[(&str, String)]) -> Result<HttpResponse, FetchError> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.header(*k, v.as_str());
        }
        let mut resp = req.call().map_err(|e| FetchError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), v.to_str().unwrap_or_default().to_string()))
            .collect();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| FetchError::Network(e.to_string()))?;
        Ok(HttpResponse { status, headers, body })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchOptions {
    pub api_base: String,
    pub token: Option<String>,
    pub page_size: usize,
    /// Rate-limit waits allowed per page before giving up.
    pub max_retries: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            api_base: DEFAULT_API_BASE.to_string(),
            token: None,
            page_size: 100,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchReport {
    pub records: Vec<IssueRecord>,
    pub skipped: Vec<SkipNote>,
    pub pages: usize,
    pub waits: Vec<Duration>,
}

fn rate_limit_wait(resp: &HttpResponse, now_epoch: u64) -> Option<Duration> {
    if resp.status != 403 && resp.status != 429 {
        return None;
    }
    if let Some(secs) = resp.header("retry-after").and_then(|v| v.trim().parse::<u64>().ok()) {
        return Some(Duration::from_secs(secs.max(1)));
    }
    if resp.header("x-ratelimit-remaining").map(str::trim) == Some("0") {
        let reset = resp
            .header("x-ratelimit-reset")
            .and_then(|v| v.trim().parse::<u64>().ok())
            .unwrap_or(now_epoch);
        return Some(Duration::from_secs(reset.saturating_sub(now_epoch).max(1)));
    }
    None
}

fn now_epoch() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Downloads every issue of `slug` (`owner/name`), oldest first.
///
/// Pull requests returned by the listing are ignored. When the rate limit is
/// exhausted, `sleep` is called until the reset time and the page retried.
pub fn fetch_issues(
    transport: &dyn Transport,
    sleep: &mut dyn FnMut(Duration),
    slug: &str,
    opts: &FetchOptions,
) -> Result<FetchReport, FetchError> {
    if opts.page_size == 0 {
        return Err(FetchError::Payload("page size must be positive".into()));
    }
    let mut headers = vec![
        ("Accept", "application/vnd.github+json".to_string()),
        ("User-Agent", concat!("srgm/", env!("CARGO_PKG_VERSION")).to_string()),
    ];
    if let Some(token) = &opts.token {
        headers.push(("Authorization", format!("Bearer {token}")));
    }

    let mut report = FetchReport::default();
    let mut index = 0;
    for page in 1.. {
        let url = format!(
            "{}/repos/{}/issues?state=all&sort=created&direction=asc&per_page={}&page={}",
            opts.api_base.trim_end_matches('/'),
            slug,
            opts.page_size,
            page
        );
        let mut attempts = 0;
        let resp = loop {
            let resp = transport.get(&url, &headers)?;
            match rate_limit_wait(&resp, now_epoch()) {
                Some(wait) if attempts < opts.max_retries => {
                    attempts += 1;
                    report.waits.push(wait);
                    sleep(wait);
                }
                Some(wait) => {
                    return Err(FetchError::RetryAfter {
                        retry_after_secs: wait.as_secs(),
                    })
                }
                None => break resp,
            }
        };
        match resp.status {
            200 => {}
            404 => return Err(FetchError::UnknownRepo(slug.to_string())),
            status => return Err(FetchError::Status { status, url }),
        }
        report.pages += 1;

        let items: Vec<Value> =
            serde_json::from_str(&resp.body).map_err(|e| FetchError::Payload(e.to_string()))?;
        let received = items.len();
        for item in &items {
            if item.get("pull_request").is_some() {
                continue;
            }
            match data::convert(index, item) {
                Ok(r) => report.records.push(r),
                Err(note) => report.skipped.push(note),
            }
            index += 1;
        }
        if received < opts.page_size {
            break;
        }
    }
    report
        .records
        .sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
    Ok(report)
}

/// [`fetch_issues`] over HTTPS with real sleeping.
pub fn fetch_issues_live(slug: &str, opts: &FetchOptions) -> Result<FetchReport, FetchError> {
    let transport = UreqTransport::default();
    fetch_issues(&transport, &mut std::thread::sleep, slug, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::collections::VecDeque;

    struct Scripted {
        responses: RefCell<VecDeque<HttpResponse>>,
        urls: RefCell<Vec<String>>,
    }

    impl Scripted {
        fn new(responses: Vec<HttpResponse>) -> Self {
            Scripted {
                responses: RefCell::new(responses.into()),
                urls: RefCell::new(Vec::new()),
            }
        }
    }

    impl Transport for Scripted {
        fn get(&self, url: &str, _headers: &[(&str, String)]) -> Result<HttpResponse, FetchError> {
            self.urls.borrow_mut().push(url.to_string());
            self.responses
                .borrow_mut()
                .pop_front()
                .ok_or_else(|| FetchError::Network("script exhausted".into()))
        }
    }

    fn ok(body: &str) -> HttpResponse {
        HttpResponse { status: 200, headers: vec![], body: body.to_string() }
    }

    fn issue_json(id: u64, day: u32) -> String {
        format!(
            r#"{{"id": {id}, "created_at": "2021-01-{day:02}T00:00:00Z", "labels": [{{"name": "bug"}}], "title": "t", "state": "open"}}"#
        )
    }

    fn opts(page_size: usize) -> FetchOptions {
        FetchOptions { api_base: "http://mock".into(), page_size, ..FetchOptions::default() }
    }

    #[test]
    fn paginates_until_short_page() {
        let t = Scripted::new(vec![
            ok(&format!("[{},{}]", issue_json(1, 1), issue_json(2, 2))),
            ok(&format!("[{},{}]", issue_json(3, 3), issue_json(4, 4))),
            ok("[]"),
        ]);
        let mut sleep = |_d: Duration| panic!("no sleep expected");
        let r = fetch_issues(&t, &mut sleep, "o/r", &opts(2)).unwrap();
        assert_eq!(r.records.len(), 4);
        assert_eq!(r.pages, 3);
        assert!(t.urls.borrow()[1].ends_with("per_page=2&page=2"));
        assert!(t.urls.borrow()[0].starts_with("http://mock/repos/o/r/issues?"));
    }

    #[test]
    fn unknown_repository() {
        let t = Scripted::new(vec![HttpResponse { status: 404, headers: vec![], body: "{}".into() }]);
        let err = fetch_issues(&t, &mut |_| {}, "o/missing", &opts(2)).unwrap_err();
        assert!(matches!(err, FetchError::UnknownRepo(s) if s == "o/missing"));
    }

    #[test]
    fn waits_out_rate_limit() {
        let limited = HttpResponse {
            status: 403,
            headers: vec![
                ("X-RateLimit-Remaining".into(), "0".into()),
                ("Retry-After".into(), "7".into()),
            ],
            body: "{}".into(),
        };
        let t = Scripted::new(vec![limited, ok(&format!("[{}]", issue_json(9, 5)))]);
        let mut slept = Vec::new();
        let r = fetch_issues(&t, &mut |d| slept.push(d), "o/r", &opts(2)).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.waits, vec![Duration::from_secs(7)]);
        assert_eq!(slept, r.waits);
    }

    #[test]
    fn exhausted_retries_surface_retry_after() {
        let limited = || HttpResponse {
            status: 429,
            headers: vec![("retry-after".into(), "30".into())],
            body: String::new(),
        };
        let t = Scripted::new(vec![limited(), limited()]);
        let o = FetchOptions { max_retries: 1, ..opts(2) };
        let err = fetch_issues(&t, &mut |_| {}, "o/r", &o).unwrap_err();
        assert!(matches!(err, FetchError::RetryAfter { retry_after_secs: 30 }));
    }

    #[test]
    fn skips_pull_requests_and_plain_forbidden_is_status_error() {
        let body = format!(
            r#"[{}, {{"id": 5, "created_at": "2021-01-01T00:00:00Z", "pull_request": {{}}}}]"#,
            issue_json(4, 2)
        );
        let t = Scripted::new(vec![ok(&body)]);
        let r = fetch_issues(&t, &mut |_| {}, "o/r", &opts(10)).unwrap();
        assert_eq!(r.records.len(), 1);

        let t = Scripted::new(vec![HttpResponse { status: 403, headers: vec![], body: String::new() }]);
        assert!(matches!(
            fetch_issues(&t, &mut |_| {}, "o/r", &opts(10)),
            Err(FetchError::Status { status: 403, .. })
        ));
    }

    #[test]
    fn reset_header_sets_wait() {
        let resp = HttpResponse {
            status: 403,
            headers: vec![
                ("x-ratelimit-remaining".into(), "0".into()),
                ("x-ratelimit-reset".into(), "1060".into()),
            ],
            body: String::new(),
        };
        assert_eq!(rate_limit_wait(&resp, 1000), Some(Duration::from_secs(60)));
        assert_eq!(rate_limit_wait(&resp, 2000), Some(Duration::from_secs(1)));
    }
}
