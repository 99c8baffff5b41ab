//! Parsing and lowering of Python 3 source files.

pub mod ast;
pub mod calls;
pub mod ir;
pub mod lower;
pub mod parse;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use calls::{collect_ast_calls, AstCallRecord};
pub use ir::{IrModule, IrProgram, ModuleId};
pub use lower::lower;
pub use parse::{parse_module, parse_source, Diagnostic};

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("{}: invalid UTF-8 at byte {offset}", path.display())]
    Encoding { path: PathBuf, offset: usize },
    #[error("{}: syntax error: {}", path.display(), diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Syntax { path: PathBuf, diagnostics: Vec<Diagnostic> },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dotted module name for a file, relative to `root` when given.
/// `pkg/mod.py` becomes `pkg.mod` and `pkg/__init__.py` becomes `pkg`.
pub fn module_name(path: &Path, root: Option<&Path>) -> String {
    let rel = root.and_then(|r| path.strip_prefix(r).ok()).unwrap_or(path);
    let rel = if root.is_none() { Path::new(rel.file_name().unwrap_or_default()) } else { rel };
    let mut parts: Vec<String> = rel
        .with_extension("")
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.len() > 1 && parts.last().map(|s| s == "__init__").unwrap_or(false) {
        parts.pop();
    }
    parts.join(".")
}

impl IrProgram {
    /// Program made of a single source text.
    pub fn from_source(text: &str, path: impl AsRef<Path>) -> Result<IrProgram, FrontendError> {
        let mut p = IrProgram::default();
        p.add_source(text, path.as_ref(), None)?;
        Ok(p)
    }

    /// Parse and lower one file, returning its module id. Module ids follow
    /// insertion order, so the first module added is the usual entry.
    pub fn add_source(&mut self, text: &str, path: &Path, root: Option<&Path>) -> Result<ModuleId, FrontendError> {
        let ast = parse_source(text, path)?;
        Ok(self.add_ast(Arc::new(ast), root))
    }

    pub fn add_bytes(&mut self, bytes: &[u8], path: &Path, root: Option<&Path>) -> Result<ModuleId, FrontendError> {
        let ast = parse_module(bytes, path)?;
        Ok(self.add_ast(Arc::new(ast), root))
    }

    pub fn add_file(&mut self, path: &Path, root: Option<&Path>) -> Result<ModuleId, FrontendError> {
        let bytes = std::fs::read(path).map_err(|source| FrontendError::Io { path: path.to_path_buf(), source })?;
        self.add_bytes(&bytes, path, root)
    }

    pub fn add_ast(&mut self, ast: Arc<ast::Ast>, root: Option<&Path>) -> ModuleId {
        let id = self.modules.len() as ModuleId;
        let name = module_name(&ast.path, root);
        self.modules.push(lower(ast, id, &name));
        id
    }
}
