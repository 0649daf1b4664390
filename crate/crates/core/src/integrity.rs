//! Offline signatures over CDN-visible executable objects (HTML, scripts),
//! and the client-side check that refuses a page whose executable content
//! does not verify.
//!
//! A signature covers `SHA-384(content) | url_path`, so it cannot be moved
//! to a different object. Signatures travel either as `<name>.icsig`
//! sidecars or in an `X-InviCloak-Sig` header. In manifest mode one signed
//! JSON hash list replaces the per-object sidecars.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crypto::{self, PublicKey, SigningKeyPair};
use crate::wire::{object_signing_message, DetachedSignature, SignedObjectEnvelope};

pub const SIDECAR_EXT: &str = "icsig";
pub const SIG_HEADER: &str = "x-invicloak-sig";
pub const MANIFEST_NAME: &str = "invicloak-manifest.json";
pub const MANIFEST_PATH: &str = "/invicloak-manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum IntegrityError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest signature does not verify")]
    ManifestSignature,
    #[error("manifest is malformed: {0}")]
    ManifestFormat(String),
    #[error("duplicate path {0} in manifest")]
    DuplicatePath(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IntegrityError + '_ {
    move |source| IntegrityError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sign_detached(path: &str, content: &[u8], key: &SigningKeyPair) -> DetachedSignature {
    DetachedSignature {
        sig_alg: key.alg(),
        signature: crypto::sign(key, &object_signing_message(path, content)),
    }
}

pub fn sign_object(path: &str, content: &[u8], key: &SigningKeyPair) -> SignedObjectEnvelope {
    SignedObjectEnvelope {
        object_bytes: content.to_vec(),
        signature: sign_detached(path, content, key),
    }
}

pub fn verify_object(path: &str, content: &[u8], sig: &DetachedSignature, key: &PublicKey) -> bool {
    crypto::verify(key, sig.sig_alg, &object_signing_message(path, content), &sig.signature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Executable,
    Passive,
}

const EXECUTABLE_TYPES: [&str; 10] = [
    "text/html",
    "application/xhtml+xml",
    "text/javascript",
    "application/javascript",
    "application/x-javascript",
    "application/ecmascript",
    "text/ecmascript",
    "application/wasm",
    "image/svg+xml",
    "application/manifest+json",
];

const EXECUTABLE_EXTENSIONS: [&str; 9] = ["html", "htm", "xhtml", "js", "mjs", "cjs", "wasm", "svg", "webmanifest"];

/// An object is executable if either its media type or its file extension
/// says so. CSS joins the set when `sign_css` is on.
pub fn classify_executable(content_type: Option<&str>, path: &str, sign_css: bool) -> ObjectClass {
    let media = content_type
        .and_then(|ct| ct.split(';').next())
        .map(|m| m.trim().to_ascii_lowercase())
        .unwrap_or_default();
    let file = path.rsplit('/').next().unwrap_or("");
    let ext = file
        .rsplit_once('.')
        .map(|(_, e)| e.to_ascii_lowercase())
        .unwrap_or_default();
    let executable = EXECUTABLE_TYPES.contains(&media.as_str())
        || EXECUTABLE_EXTENSIONS.contains(&ext.as_str())
        || (sign_css && (media == "text/css" || ext == "css"));
    if executable {
        ObjectClass::Executable
    } else {
        ObjectClass::Passive
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    /// Hex SHA-384 of the object.
    pub sha384: String,
    /// Hex `sig_alg | signature`; absent in manifest mode, where the
    /// manifest itself carries the only signature.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub signature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectManifest {
    pub version: u8,
    pub objects: Vec<ManifestEntry>,
}

impl ObjectManifest {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, IntegrityError> {
        let manifest: ObjectManifest =
            serde_json::from_slice(bytes).map_err(|e| IntegrityError::ManifestFormat(e.to_string()))?;
        if manifest.version != 1 {
            return Err(IntegrityError::ManifestFormat(format!("version {}", manifest.version)));
        }
        let mut seen = std::collections::HashSet::new();
        for entry in &manifest.objects {
            if !seen.insert(entry.path.as_str()) {
                return Err(IntegrityError::DuplicatePath(entry.path.clone()));
            }
        }
        Ok(manifest)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SignTreeOptions {
    pub manifest_mode: bool,
    pub sign_css: bool,
}

fn is_signing_output(rel: &str) -> bool {
    rel.ends_with(&format!(".{SIDECAR_EXT}")) || rel == MANIFEST_NAME
}

/// Signs every executable object under `dir`. Writes `.icsig` sidecars,
/// or in manifest mode the manifest and its own sidecar. Output depends
/// only on the tree contents and the key.
pub fn sign_tree(dir: &Path, key: &SigningKeyPair, opts: SignTreeOptions) -> Result<ObjectManifest, IntegrityError> {
    let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| IntegrityError::Io {
            path: dir.to_path_buf(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walk stays under its root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if is_signing_output(&rel) || classify_executable(None, &rel, opts.sign_css) == ObjectClass::Passive {
            continue;
        }
        files.insert(format!("/{rel}"), entry.path().to_path_buf());
    }

    let mut objects = Vec::with_capacity(files.len());
    for (url_path, fs_path) in &files {
        let content = std::fs::read(fs_path).map_err(io_err(fs_path))?;
        let signature = if opts.manifest_mode {
            None
        } else {
            let sig = sign_detached(url_path, &content, key);
            let sidecar = sidecar_path(fs_path);
            std::fs::write(&sidecar, sig.to_sidecar()).map_err(io_err(&sidecar))?;
            Some(sig.to_hex())
        };
        objects.push(ManifestEntry {
            path: url_path.clone(),
            sha384: crypto::hex(&crypto::sha384(&content)),
            signature,
        });
    }
    let manifest = ObjectManifest { version: 1, objects };
    if opts.manifest_mode {
        let text = manifest.to_json();
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, &text).map_err(io_err(&path))?;
        let sig = sign_detached(MANIFEST_PATH, text.as_bytes(), key);
        let sidecar = sidecar_path(&path);
        std::fs::write(&sidecar, sig.to_sidecar()).map_err(io_err(&sidecar))?;
    }
    Ok(manifest)
}

pub fn sidecar_path(file: &Path) -> PathBuf {
    let mut name = file.as_os_str().to_os_string();
    name.push(".");
    name.push(SIDECAR_EXT);
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    /// The site publishes no key, so nothing is checked.
    Skipped,
    Passive,
    Verified,
    Rejected(String),
}

/// Client-side verifier for one site.
#[derive(Debug, Clone)]
pub struct Verifier {
    key: Option<PublicKey>,
    sign_css: bool,
    hashes: Option<HashMap<String, [u8; 48]>>,
}

impl Verifier {
    /// `key` is `None` when the site has no TLSA record.
    pub fn new(key: Option<PublicKey>, sign_css: bool) -> Self {
        Verifier {
            key,
            sign_css,
            hashes: None,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.key.is_some()
    }

    /// Accepts a signed manifest; afterwards objects it lists are checked
    /// against their hashes.
    pub fn load_manifest(&mut self, text: &[u8], sig: &DetachedSignature) -> Result<(), IntegrityError> {
        let Some(key) = &self.key else {
            return Ok(());
        };
        if !verify_object(MANIFEST_PATH, text, sig, key) {
            return Err(IntegrityError::ManifestSignature);
        }
        let manifest = ObjectManifest::from_json(text)?;
        let mut hashes = HashMap::with_capacity(manifest.objects.len());
        for entry in manifest.objects {
            let digest = crypto::unhex(&entry.sha384)
                .and_then(|d| <[u8; 48]>::try_from(d).ok())
                .ok_or_else(|| IntegrityError::ManifestFormat(format!("bad hash for {}", entry.path)))?;
            hashes.insert(entry.path, digest);
        }
        self.hashes = Some(hashes);
        Ok(())
    }

    pub fn verify(&self, path: &str, content_type: Option<&str>, content: &[u8], sig: Option<&DetachedSignature>) -> Verdict {
        let Some(key) = &self.key else {
            return Verdict::Skipped;
        };
        if classify_executable(content_type, path, self.sign_css) == ObjectClass::Passive {
            return Verdict::Passive;
        }
        if let Some(expected) = self.hashes.as_ref().and_then(|h| h.get(path)) {
            return if crypto::sha384(content) == *expected {
                Verdict::Verified
            } else {
                Verdict::Rejected("content does not match the signed manifest".into())
            };
        }
        match sig {
            None => Verdict::Rejected("no signature".into()),
            Some(sig) if verify_object(path, content, sig, key) => Verdict::Verified,
            Some(_) => Verdict::Rejected("signature does not verify".into()),
        }
    }
}

/// Verdicts for the objects of one page. Any rejection blocks the load.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PageLoad {
    pub objects: Vec<(String, Verdict)>,
}

impl PageLoad {
    pub fn record(&mut self, path: &str, verdict: Verdict) {
        self.objects.push((path.to_string(), verdict));
    }

    pub fn blocked(&self) -> bool {
        self.objects.iter().any(|(_, v)| matches!(v, Verdict::Rejected(_)))
    }
}
