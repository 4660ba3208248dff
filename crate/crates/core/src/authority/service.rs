//! Network front end of the authority.
//!
//! Transport is TLS over TCP. Every message in either direction is one frame:
//! a big-endian `u32` payload length followed by the payload.
//!
//! Request payloads are UTF-8 JSON objects:
//!
//! ```json
//! {"version": 1, "token": "...", "op": "submit_license", "request": {...}}
//! {"version": 1, "token": "...", "op": "fetch_bundle", "licensee": "<32 hex>"}
//! {"version": 1, "token": "...", "op": "delegate", "delegation": {...}}
//! ```
//!
//! Response payloads are one status byte followed by the body: bundle bytes on
//! success, a UTF-8 reason otherwise. Callers authenticate with a static
//! bearer token from the service configuration; licensee tokens may only act
//! for their own licensee id, and only admin tokens may delegate.

use std::collections::HashMap;
use std::fs;
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rustls::pki_types::pem::PemObject;
use rustls::pki_types::{CertificateDer, PrivateKeyDer, ServerName};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_rustls::{TlsAcceptor, TlsConnector};
use tracing::{debug, warn};

use super::{AuditLog, Authority, AuthorityError, Delegation, LicenseRequest};
use crate::keystore::{Bundle, EntityId, KeyStore, KeystoreError};
use crate::secrets::{combine, SecretsError, Share, THRESHOLD};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_REQUEST_LEN: usize = 1 << 20;
pub const MAX_RESPONSE_LEN: usize = 1 << 31;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("tls: {0}")]
    Tls(#[from] rustls::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Secrets(#[from] SecretsError),
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error("request rejected ({status:?}): {message}")]
    Rejected { status: Status, message: String },
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Licensee,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    /// Shown in the audit log instead of the token.
    pub name: String,
    pub token: String,
    pub role: Role,
    /// The licensee a licensee token may act for.
    #[serde(default)]
    pub entity: Option<EntityId>,
}

fn default_threshold() -> usize {
    THRESHOLD
}

/// TOML service configuration. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, Deserialize)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    pub tls_cert: PathBuf,
    pub tls_key: PathBuf,
    /// Custody shares presented at startup.
    pub shares: Vec<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: usize,
    pub credentials: Vec<Credential>,
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg: ServiceConfig = toml::from_str(&text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data_dir);
        resolve(&mut cfg.tls_cert);
        resolve(&mut cfg.tls_key);
        cfg.shares.iter_mut().for_each(resolve);
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    SubmitLicense { request: LicenseRequest },
    FetchBundle { licensee: EntityId },
    Delegate { delegation: Delegation },
}

impl Operation {
    fn name(&self) -> &'static str {
        match self {
            Operation::SubmitLicense { .. } => "submit_license",
            Operation::FetchBundle { .. } => "fetch_bundle",
            Operation::Delegate { .. } => "delegate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub version: u32,
    pub token: String,
    #[serde(flatten)]
    pub op: Operation,
}

impl Request {
    pub fn new(token: impl Into<String>, op: Operation) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            token: token.into(),
            op,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    BadRequest = 1,
    Unauthorized = 2,
    NotFound = 3,
    Unavailable = 4,
    Internal = 5,
}

impl Status {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => Status::Ok,
            1 => Status::BadRequest,
            2 => Status::Unauthorized,
            3 => Status::NotFound,
            4 => Status::Unavailable,
            5 => Status::Internal,
            _ => return None,
        })
    }

    fn label(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::BadRequest => "bad_request",
            Status::Unauthorized => "unauthorized",
            Status::NotFound => "not_found",
            Status::Unavailable => "unavailable",
            Status::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: Status,
    pub body: Vec<u8>,
}

impl Response {
    fn ok(body: Vec<u8>) -> Self {
        Self {
            status: Status::Ok,
            body,
        }
    }

    fn error(status: Status, message: impl Into<String>) -> Self {
        Self {
            status,
            body: message.into().into_bytes(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.body.len() + 1);
        out.push(self.status as u8);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, ServiceError> {
        let (&status, body) = payload.split_first().ok_or(ServiceError::Protocol("empty response"))?;
        let status = Status::from_byte(status).ok_or(ServiceError::Protocol("unknown status"))?;
        Ok(Self {
            status,
            body: body.to_vec(),
        })
    }

    /// The bundle of a successful response.
    pub fn into_bundle(self) -> Result<Bundle, ServiceError> {
        if self.status != Status::Ok {
            return Err(ServiceError::Rejected {
                status: self.status,
                message: String::from_utf8_lossy(&self.body).into_owned(),
            });
        }
        Ok(Bundle::from_bytes(&self.body)?)
    }
}

/// Request handling independent of the transport.
pub struct ServiceState {
    authority: Authority,
    credentials: Vec<Credential>,
    licensees: Mutex<HashMap<EntityId, Arc<KeyStore>>>,
    store_dir: Option<PathBuf>,
}

impl ServiceState {
    /// With `store_dir`, each licensee's keys persist in
    /// `<store_dir>/<licensee hex>.geok` and are reloaded here.
    pub fn new(
        authority: Authority,
        credentials: Vec<Credential>,
        store_dir: Option<PathBuf>,
    ) -> Result<Self, ServiceError> {
        let mut licensees = HashMap::new();
        if let Some(dir) = &store_dir {
            fs::create_dir_all(dir)?;
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("geok") {
                    continue;
                }
                let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) else {
                    continue;
                };
                licensees.insert(id, Arc::new(KeyStore::open(&path)?));
            }
        }
        Ok(Self {
            authority,
            credentials,
            licensees: Mutex::new(licensees),
            store_dir,
        })
    }

    pub fn authority(&self) -> &Authority {
        &self.authority
    }

    fn authenticate(&self, token: &str) -> Option<&Credential> {
        // Scan every credential so timing does not reveal which one matched.
        let mut found = None;
        for c in &self.credentials {
            if ct_str_eq(c.token.as_bytes(), token.as_bytes()) {
                found = Some(c);
            }
        }
        found
    }

    fn store_for(&self, id: EntityId) -> Result<Arc<KeyStore>, ServiceError> {
        let mut map = self.licensees.lock().expect("licensee map poisoned");
        if let Some(s) = map.get(&id) {
            return Ok(s.clone());
        }
        let store = match &self.store_dir {
            Some(dir) => KeyStore::open(dir.join(format!("{id}.geok")))?,
            None => KeyStore::in_memory(),
        };
        let store = Arc::new(store);
        map.insert(id, store.clone());
        Ok(store)
    }

    pub fn handle(&self, payload: &[u8]) -> Response {
        let request: Request = match serde_json::from_slice(payload) {
            Ok(r) => r,
            Err(e) => {
                self.audit_request("?", "-", Status::BadRequest);
                return Response::error(Status::BadRequest, format!("malformed request: {e}"));
            }
        };
        let op = request.op.name();
        let Some(caller) = self.authenticate(&request.token) else {
            self.audit_request(op, "-", Status::Unauthorized);
            return Response::error(Status::Unauthorized, "unknown credential");
        };
        let response = if request.version != PROTOCOL_VERSION {
            Response::error(Status::BadRequest, format!("unsupported version {}", request.version))
        } else {
            self.dispatch(caller, &request.op)
        };
        self.audit_request(op, &caller.name, response.status);
        response
    }

    fn dispatch(&self, caller: &Credential, op: &Operation) -> Response {
        let may_act_for = |id: EntityId| caller.role == Role::Admin || caller.entity == Some(id);
        match op {
            Operation::SubmitLicense { request } => {
                if !may_act_for(request.licensee) {
                    return Response::error(Status::Unauthorized, "credential may not act for this licensee");
                }
                let bundle = match self.authority.issue(request) {
                    Ok(b) => b,
                    Err(e) => return authority_failure(e),
                };
                let bytes = bundle.to_bytes();
                if let Err(e) = self
                    .store_for(request.licensee)
                    .and_then(|s| Ok(s.import_bundle(&bytes)?))
                {
                    warn!(error = %e, "failed to persist issued bundle");
                    return Response::error(Status::Internal, "failed to persist bundle");
                }
                Response::ok(bytes)
            }
            Operation::FetchBundle { licensee } => {
                if !may_act_for(*licensee) {
                    return Response::error(Status::Unauthorized, "credential may not act for this licensee");
                }
                let store = self
                    .licensees
                    .lock()
                    .expect("licensee map poisoned")
                    .get(licensee)
                    .cloned();
                match store {
                    Some(s) => Response::ok(s.export(*licensee).to_bytes()),
                    None => Response::error(Status::NotFound, format!("no bundle for licensee {licensee}")),
                }
            }
            Operation::Delegate { delegation } => {
                if caller.role != Role::Admin {
                    return Response::error(Status::Unauthorized, "delegation requires an admin credential");
                }
                match self.authority.delegate(delegation) {
                    Ok(b) => Response::ok(b.to_bytes()),
                    Err(e) => authority_failure(e),
                }
            }
        }
    }

    fn audit_request(&self, op: &str, caller: &str, status: Status) {
        let line = format!(
            "request op={op} caller={} status={}",
            super::audit::quote(caller),
            status.label()
        );
        if let Err(e) = self.authority.audit().append(&line) {
            warn!(error = %e, "audit write failed");
        }
    }
}

fn authority_failure(e: AuthorityError) -> Response {
    let status = match e {
        AuthorityError::Unavailable => Status::Unavailable,
        AuthorityError::Audit(_) => Status::Internal,
        AuthorityError::Geo(_) | AuthorityError::Kdf(_) | AuthorityError::EmptyCoverage => Status::BadRequest,
    };
    Response::error(status, e.to_string())
}

fn ct_str_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R, limit: usize) -> Result<Option<Vec<u8>>, ServiceError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > limit {
        return Err(ServiceError::Protocol("frame exceeds size limit"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).await?;
    Ok(Some(buf))
}

pub async fn write_frame<W: AsyncWrite + Unpin>(w: &mut W, payload: &[u8]) -> Result<(), ServiceError> {
    let len = u32::try_from(payload.len()).map_err(|_| ServiceError::Protocol("frame too large"))?;
    w.write_all(&len.to_be_bytes()).await?;
    w.write_all(payload).await?;
    w.flush().await?;
    Ok(())
}

fn ring() -> Arc<rustls::crypto::CryptoProvider> {
    Arc::new(rustls::crypto::ring::default_provider())
}

pub fn server_tls_from_pem(cert_pem: &[u8], key_pem: &[u8]) -> Result<Arc<rustls::ServerConfig>, ServiceError> {
    let certs = CertificateDer::pem_slice_iter(cert_pem)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ServiceError::Config(format!("certificate: {e}")))?;
    let key = PrivateKeyDer::from_pem_slice(key_pem).map_err(|e| ServiceError::Config(format!("private key: {e}")))?;
    let config = rustls::ServerConfig::builder_with_provider(ring())
        .with_safe_default_protocol_versions()?
        .with_no_client_auth()
        .with_single_cert(certs, key)?;
    Ok(Arc::new(config))
}

/// Client configuration trusting only the given PEM roots.
pub fn client_tls_from_pem(ca_pem: &[u8]) -> Result<Arc<rustls::ClientConfig>, ServiceError> {
    let mut roots = rustls::RootCertStore::empty();
    for cert in CertificateDer::pem_slice_iter(ca_pem) {
        let cert = cert.map_err(|e| ServiceError::Config(format!("ca certificate: {e}")))?;
        roots.add(cert)?;
    }
    let config = rustls::ClientConfig::builder_with_provider(ring())
        .with_safe_default_protocol_versions()?
        .with_root_certificates(roots)
        .with_no_client_auth();
    Ok(Arc::new(config))
}

pub struct AuthorityServer {
    listener: TcpListener,
    acceptor: TlsAcceptor,
    state: Arc<ServiceState>,
}

impl AuthorityServer {
    pub async fn bind(addr: &str, tls: Arc<rustls::ServerConfig>, state: ServiceState) -> Result<Self, ServiceError> {
        Ok(Self {
            listener: TcpListener::bind(addr).await?,
            acceptor: TlsAcceptor::from(tls),
            state: Arc::new(state),
        })
    }

    /// Combines the configured shares into the master key, schedules it, and
    /// binds the listener. The master key itself is dropped once scheduled.
    pub async fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let shares = cfg
            .shares
            .iter()
            .map(|p| Ok(Share::from_bytes(&fs::read(p)?)?))
            .collect::<Result<Vec<_>, ServiceError>>()?;
        let mk = combine(&shares, cfg.threshold)?;
        fs::create_dir_all(&cfg.data_dir)?;
        let audit = Arc::new(AuditLog::open(cfg.data_dir.join("audit.log"))?);
        let authority = Authority::with_master_key(&mk, audit);
        drop(mk);
        let state = ServiceState::new(authority, cfg.credentials.clone(), Some(cfg.data_dir.join("licensees")))?;
        let tls = server_tls_from_pem(&fs::read(&cfg.tls_cert)?, &fs::read(&cfg.tls_key)?)?;
        Self::bind(&cfg.listen, tls, state).await
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn state(&self) -> &Arc<ServiceState> {
        &self.state
    }

    pub async fn run(self) -> Result<(), ServiceError> {
        self.run_until(std::future::pending()).await
    }

    pub async fn run_until<F: Future<Output = ()>>(self, shutdown: F) -> Result<(), ServiceError> {
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => return Ok(()),
                accepted = self.listener.accept() => {
                    let (stream, peer) = accepted?;
                    let acceptor = self.acceptor.clone();
                    let state = self.state.clone();
                    tokio::spawn(async move {
                        if let Err(e) = serve_connection(stream, acceptor, state).await {
                            debug!(%peer, error = %e, "connection closed with error");
                        }
                    });
                }
            }
        }
    }
}

async fn serve_connection(
    stream: TcpStream,
    acceptor: TlsAcceptor,
    state: Arc<ServiceState>,
) -> Result<(), ServiceError> {
    let mut tls = acceptor.accept(stream).await?;
    loop {
        let payload = match read_frame(&mut tls, MAX_REQUEST_LEN).await {
            Ok(Some(p)) => p,
            Ok(None) => return Ok(()),
            Err(ServiceError::Protocol(reason)) => {
                let resp = Response::error(Status::BadRequest, reason);
                write_frame(&mut tls, &resp.encode()).await?;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let st = state.clone();
        let resp = tokio::task::spawn_blocking(move || st.handle(&payload))
            .await
            .unwrap_or_else(|_| Response::error(Status::Internal, "handler panicked"));
        write_frame(&mut tls, &resp.encode()).await?;
    }
}

pub struct AuthorityClient {
    stream: tokio_rustls::client::TlsStream<TcpStream>,
}

impl AuthorityClient {
    pub async fn connect(
        addr: SocketAddr,
        server_name: &str,
        tls: Arc<rustls::ClientConfig>,
    ) -> Result<Self, ServiceError> {
        let name = ServerName::try_from(server_name.to_owned())
            .map_err(|_| ServiceError::Config(format!("invalid server name {server_name}")))?;
        let tcp = TcpStream::connect(addr).await?;
        let stream = TlsConnector::from(tls).connect(name, tcp).await?;
        Ok(Self { stream })
    }

    pub async fn send_raw(&mut self, payload: &[u8]) -> Result<Response, ServiceError> {
        write_frame(&mut self.stream, payload).await?;
        let frame = read_frame(&mut self.stream, MAX_RESPONSE_LEN)
            .await?
            .ok_or(ServiceError::Protocol("connection closed before response"))?;
        Response::decode(&frame)
    }

    pub async fn call(&mut self, request: &Request) -> Result<Response, ServiceError> {
        self.send_raw(&request.encode()).await
    }

    pub async fn submit_license(&mut self, token: &str, request: LicenseRequest) -> Result<Bundle, ServiceError> {
        self.call(&Request::new(token, Operation::SubmitLicense { request }))
            .await?
            .into_bundle()
    }

    pub async fn fetch_bundle(&mut self, token: &str, licensee: EntityId) -> Result<Bundle, ServiceError> {
        self.call(&Request::new(token, Operation::FetchBundle { licensee }))
            .await?
            .into_bundle()
    }

    pub async fn delegate(&mut self, token: &str, delegation: Delegation) -> Result<Bundle, ServiceError> {
        self.call(&Request::new(token, Operation::Delegate { delegation }))
            .await?
            .into_bundle()
    }
}
