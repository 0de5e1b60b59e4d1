//! Minimal pickle reader for the objects found in Planetoid raw files:
//! numpy arrays, scipy CSR matrices, dicts/defaultdicts of int lists.
//!
//! Python 2 `str` payloads are decoded as latin-1 text (the same convention as
//! `pickle.load(f, encoding="latin1")`) and turned back into bytes where a
//! buffer is expected.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Debug, Clone)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Bytes(Vec<u8>),
    Tuple(Vec<Value>),
    List(Rc<RefCell<Vec<Value>>>),
    Dict(Rc<RefCell<Vec<(Value, Value)>>>),
    Global(String, String),
    Object(Rc<Object>),
}

#[derive(Debug)]
pub struct Object {
    pub class: String,
    pub args: Vec<Value>,
    pub state: RefCell<Option<Value>>,
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Bool(b) => Some(i64::from(*b)),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Raw buffer contents; latin-1 text maps back to its byte values.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        match self {
            Value::Bytes(b) => Some(b.clone()),
            Value::Str(s) => s.chars().map(|c| u8::try_from(u32::from(c)).ok()).collect(),
            _ => None,
        }
    }

    pub fn items(&self) -> Option<Vec<Value>> {
        match self {
            Value::Tuple(v) => Some(v.clone()),
            Value::List(v) => Some(v.borrow().clone()),
            _ => None,
        }
    }

    /// Looks up a string key in a dict.
    pub fn get(&self, key: &str) -> Option<Value> {
        match self {
            Value::Dict(d) => d
                .borrow()
                .iter()
                .find(|(k, _)| k.as_str() == Some(key))
                .map(|(_, v)| v.clone()),
            _ => None,
        }
    }
}

type PResult<T> = std::result::Result<T, String>;

struct Machine<'a> {
    data: &'a [u8],
    pos: usize,
    stack: Vec<Value>,
    marks: Vec<usize>,
    memo: HashMap<usize, Value>,
}

/// Parses one pickled object.
pub fn loads(data: &[u8]) -> PResult<Value> {
    let mut m = Machine {
        data,
        pos: 0,
        stack: Vec::new(),
        marks: Vec::new(),
        memo: HashMap::new(),
    };
    m.run()
}

impl<'a> Machine<'a> {
    fn take(&mut self, n: usize) -> PResult<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(format!("truncated pickle at offset {}", self.pos));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn byte(&mut self) -> PResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> PResult<usize> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize)
    }

    fn u32(&mut self) -> PResult<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> PResult<usize> {
        usize::try_from(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
            .map_err(|_| "length overflow".to_string())
    }

    fn line(&mut self) -> PResult<&'a str> {
        let rest = &self.data[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| format!("unterminated line at offset {}", self.pos))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|e| e.to_string())
    }

    fn pop(&mut self) -> PResult<Value> {
        self.stack.pop().ok_or_else(|| "stack underflow".to_string())
    }

    fn top(&mut self) -> PResult<&mut Value> {
        self.stack.last_mut().ok_or_else(|| "stack underflow".to_string())
    }

    fn pop_mark(&mut self) -> PResult<Vec<Value>> {
        let k = self.marks.pop().ok_or_else(|| "mark stack underflow".to_string())?;
        if k > self.stack.len() {
            return Err("mark beyond stack".into());
        }
        Ok(self.stack.split_off(k))
    }

    fn memo_get(&self, i: usize) -> PResult<Value> {
        self.memo
            .get(&i)
            .cloned()
            .ok_or_else(|| format!("memo key {i} missing"))
    }

    fn memo_put(&mut self, i: usize) -> PResult<()> {
        let v = self.stack.last().cloned().ok_or("stack underflow")?;
        self.memo.insert(i, v);
        Ok(())
    }

    fn run(&mut self) -> PResult<Value> {
        loop {
            let op = self.byte()?;
            match op {
                0x80 => {
                    let proto = self.byte()?;
                    if proto > 5 {
                        return Err(format!("unsupported pickle protocol {proto}"));
                    }
                }
                0x95 => {
                    self.u64()?;
                }
                b'.' => return self.pop(),
                b'(' => self.marks.push(self.stack.len()),
                b'0' => {
                    self.pop()?;
                }
                b'1' => {
                    self.pop_mark()?;
                }
                b'2' => {
                    let v = self.top()?.clone();
                    self.stack.push(v);
                }
                b'N' => self.stack.push(Value::None),
                0x88 => self.stack.push(Value::Bool(true)),
                0x89 => self.stack.push(Value::Bool(false)),
                b'I' => {
                    let s = self.line()?;
                    let v = match s {
                        "00" => Value::Bool(false),
                        "01" => Value::Bool(true),
                        _ => Value::Int(s.trim().parse().map_err(|e| format!("INT {s:?}: {e}"))?),
                    };
                    self.stack.push(v);
                }
                b'J' => {
                    let v = i32::from_le_bytes(self.take(4)?.try_into().unwrap());
                    self.stack.push(Value::Int(v.into()));
                }
                b'K' => {
                    let v = self.byte()?;
                    self.stack.push(Value::Int(v.into()));
                }
                b'M' => {
                    let v = self.u16()?;
                    self.stack.push(Value::Int(v as i64));
                }
                b'L' => {
                    let s = self.line()?.trim_end_matches('L');
                    let v = s.parse().map_err(|e| format!("LONG {s:?}: {e}"))?;
                    self.stack.push(Value::Int(v));
                }
                0x8a | 0x8b => {
                    let n = if op == 0x8a {
                        self.byte()? as usize
                    } else {
                        self.u32()?
                    };
                    let bytes = self.take(n)?;
                    self.stack.push(Value::Int(long_from_le(bytes)?));
                }
                b'F' => {
                    let s = self.line()?;
                    let v = s.trim().parse().map_err(|e| format!("FLOAT {s:?}: {e}"))?;
                    self.stack.push(Value::Float(v));
                }
                b'G' => {
                    let v = f64::from_be_bytes(self.take(8)?.try_into().unwrap());
                    self.stack.push(Value::Float(v));
                }
                b'S' => {
                    let s = self.line()?;
                    self.stack.push(Value::Str(unquote(s)?));
                }
                b'T' | b'U' => {
                    let n = if op == b'T' {
                        self.u32()?
                    } else {
                        self.byte()? as usize
                    };
                    let bytes = self.take(n)?;
                    self.stack.push(Value::Str(latin1(bytes)));
                }
                b'V' => {
                    let s = self.line()?;
                    self.stack.push(Value::Str(unescape_raw_unicode(s)?));
                }
                b'X' | 0x8c | 0x8d => {
                    let n = match op {
                        b'X' => self.u32()?,
                        0x8c => self.byte()? as usize,
                        _ => self.u64()?,
                    };
                    let bytes = self.take(n)?;
                    let s = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
                    self.stack.push(Value::Str(s.to_owned()));
                }
                b'B' | b'C' | 0x8e | 0x96 => {
                    let n = match op {
                        b'B' => self.u32()?,
                        b'C' => self.byte()? as usize,
                        _ => self.u64()?,
                    };
                    let bytes = self.take(n)?.to_vec();
                    self.stack.push(Value::Bytes(bytes));
                }
                b')' => self.stack.push(Value::Tuple(Vec::new())),
                b't' => {
                    let items = self.pop_mark()?;
                    self.stack.push(Value::Tuple(items));
                }
                0x85..=0x87 => {
                    let n = (op - 0x84) as usize;
                    if self.stack.len() < n {
                        return Err("stack underflow".into());
                    }
                    let items = self.stack.split_off(self.stack.len() - n);
                    self.stack.push(Value::Tuple(items));
                }
                b']' => self.stack.push(Value::List(Rc::default())),
                b'l' => {
                    let items = self.pop_mark()?;
                    self.stack.push(Value::List(Rc::new(RefCell::new(items))));
                }
                b'a' => {
                    let v = self.pop()?;
                    self.extend_list(vec![v])?;
                }
                b'e' => {
                    let items = self.pop_mark()?;
                    self.extend_list(items)?;
                }
                b'}' => self.stack.push(Value::Dict(Rc::default())),
                b'd' => {
                    let items = self.pop_mark()?;
                    let pairs = pairs(items)?;
                    self.stack.push(Value::Dict(Rc::new(RefCell::new(pairs))));
                }
                b's' => {
                    let v = self.pop()?;
                    let k = self.pop()?;
                    self.set_items(vec![(k, v)])?;
                }
                b'u' => {
                    let items = self.pop_mark()?;
                    self.set_items(pairs(items)?)?;
                }
                0x8f => self.stack.push(Value::List(Rc::default())),
                0x90 => {
                    let items = self.pop_mark()?;
                    self.extend_list(items)?;
                }
                0x91 => {
                    let items = self.pop_mark()?;
                    self.stack.push(Value::Tuple(items));
                }
                b'c' => {
                    let module = self.line()?.to_owned();
                    let name = self.line()?.to_owned();
                    self.stack.push(Value::Global(module, name));
                }
                0x93 => {
                    let name = self.pop()?;
                    let module = self.pop()?;
                    match (module, name) {
                        (Value::Str(m), Value::Str(n)) => self.stack.push(Value::Global(m, n)),
                        _ => return Err("STACK_GLOBAL expects two strings".into()),
                    }
                }
                b'R' => {
                    let args = self.pop()?;
                    let func = self.pop()?;
                    let args = args.items().ok_or("REDUCE arguments are not a tuple")?;
                    self.stack.push(call(func, args)?);
                }
                0x81 => {
                    let args = self.pop()?;
                    let cls = self.pop()?;
                    let args = args.items().ok_or("NEWOBJ arguments are not a tuple")?;
                    self.stack.push(instantiate(cls, args)?);
                }
                0x92 => {
                    let _kwargs = self.pop()?;
                    let args = self.pop()?;
                    let cls = self.pop()?;
                    let args = args.items().ok_or("NEWOBJ_EX arguments are not a tuple")?;
                    self.stack.push(instantiate(cls, args)?);
                }
                b'o' => {
                    let mut items = self.pop_mark()?;
                    if items.is_empty() {
                        return Err("OBJ without class".into());
                    }
                    let cls = items.remove(0);
                    self.stack.push(instantiate(cls, items)?);
                }
                b'i' => {
                    let module = self.line()?.to_owned();
                    let name = self.line()?.to_owned();
                    let items = self.pop_mark()?;
                    self.stack.push(instantiate(Value::Global(module, name), items)?);
                }
                b'b' => {
                    let state = self.pop()?;
                    match self.top()? {
                        Value::Object(o) => *o.state.borrow_mut() = Some(state),
                        Value::Dict(d) => {
                            if let Value::Dict(s) = state {
                                d.borrow_mut().extend(s.borrow().iter().cloned());
                            }
                        }
                        other => return Err(format!("BUILD on non-object {other:?}")),
                    }
                }
                b'p' => {
                    let i = self.line()?.trim().parse().map_err(|_| "bad PUT index")?;
                    self.memo_put(i)?;
                }
                b'q' => {
                    let i = self.byte()? as usize;
                    self.memo_put(i)?;
                }
                b'r' => {
                    let i = self.u32()?;
                    self.memo_put(i)?;
                }
                0x94 => {
                    let i = self.memo.len();
                    self.memo_put(i)?;
                }
                b'g' => {
                    let i = self.line()?.trim().parse().map_err(|_| "bad GET index")?;
                    let v = self.memo_get(i)?;
                    self.stack.push(v);
                }
                b'h' => {
                    let i = self.byte()? as usize;
                    let v = self.memo_get(i)?;
                    self.stack.push(v);
                }
                b'j' => {
                    let i = self.u32()?;
                    let v = self.memo_get(i)?;
                    self.stack.push(v);
                }
                other => {
                    return Err(format!(
                        "unsupported pickle opcode 0x{other:02x} at offset {}",
                        self.pos - 1
                    ))
                }
            }
        }
    }

    fn extend_list(&mut self, items: Vec<Value>) -> PResult<()> {
        match self.top()? {
            Value::List(l) => {
                l.borrow_mut().extend(items);
                Ok(())
            }
            other => Err(format!("APPEND on non-list {other:?}")),
        }
    }

    fn set_items(&mut self, items: Vec<(Value, Value)>) -> PResult<()> {
        match self.top()? {
            Value::Dict(d) => {
                d.borrow_mut().extend(items);
                Ok(())
            }
            other => Err(format!("SETITEM on non-dict {other:?}")),
        }
    }
}

fn pairs(items: Vec<Value>) -> PResult<Vec<(Value, Value)>> {
    if items.len() % 2 != 0 {
        return Err("odd number of dict items".into());
    }
    let mut it = items.into_iter();
    let mut out = Vec::new();
    while let (Some(k), Some(v)) = (it.next(), it.next()) {
        out.push((k, v));
    }
    Ok(out)
}

fn class_name(v: &Value) -> PResult<String> {
    match v {
        Value::Global(m, n) => Ok(format!("{m}.{n}")),
        other => Err(format!("expected a class, found {other:?}")),
    }
}

fn instantiate(cls: Value, args: Vec<Value>) -> PResult<Value> {
    Ok(Value::Object(Rc::new(Object {
        class: class_name(&cls)?,
        args,
        state: RefCell::new(None),
    })))
}

/// Applies the handful of callables that appear in array and matrix pickles.
fn call(func: Value, args: Vec<Value>) -> PResult<Value> {
    let name = class_name(&func)?;
    let short = name.rsplit('.').next().unwrap_or("");
    match (name.as_str(), short) {
        ("_codecs.encode", _) => {
            let text = args.first().and_then(Value::as_str).ok_or("encode expects text")?;
            let enc = args.get(1).and_then(Value::as_str).unwrap_or("utf-8");
            let bytes = if enc.eq_ignore_ascii_case("latin1") || enc.eq_ignore_ascii_case("latin-1")
            {
                Value::Str(text.to_owned()).to_bytes().ok_or("non latin-1 text")?
            } else {
                text.as_bytes().to_vec()
            };
            Ok(Value::Bytes(bytes))
        }
        (_, "_reconstruct") if name.starts_with("numpy") => instantiate(
            Value::Global("numpy".into(), "ndarray".into()),
            args,
        ),
        ("copy_reg._reconstructor", _) | ("copyreg._reconstructor", _) => {
            let cls = args.into_iter().next().ok_or("_reconstructor without class")?;
            instantiate(cls, Vec::new())
        }
        ("collections.defaultdict", _) | ("__builtin__.dict", _) | ("builtins.dict", _) => {
            Ok(Value::Dict(Rc::default()))
        }
        ("__builtin__.set", _) | ("builtins.set", _) | ("__builtin__.list", _)
        | ("builtins.list", _) => {
            let items = args.first().and_then(Value::items).unwrap_or_default();
            Ok(Value::List(Rc::new(RefCell::new(items))))
        }
        _ => instantiate(func, args),
    }
}

fn long_from_le(bytes: &[u8]) -> PResult<i64> {
    if bytes.is_empty() {
        return Ok(0);
    }
    if bytes.len() > 8 {
        let sign = if bytes[bytes.len() - 1] & 0x80 != 0 { 0xff } else { 0 };
        if bytes[8..].iter().any(|&b| b != sign) {
            return Err("integer does not fit in 64 bits".into());
        }
    }
    let negative = bytes[bytes.len() - 1] & 0x80 != 0;
    let mut buf = [if negative { 0xff } else { 0 }; 8];
    let n = bytes.len().min(8);
    buf[..n].copy_from_slice(&bytes[..n]);
    Ok(i64::from_le_bytes(buf))
}

fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| char::from(b)).collect()
}

/// Protocol-0 `STRING` argument: a quoted Python literal.
fn unquote(s: &str) -> PResult<String> {
    let s = s.trim_end();
    let inner = s
        .strip_prefix('\'')
        .and_then(|r| r.strip_suffix('\''))
        .or_else(|| s.strip_prefix('"').and_then(|r| r.strip_suffix('"')))
        .ok_or_else(|| format!("unquoted STRING {s:?}"))?;
    let mut out = Vec::new();
    let mut chars = inner.bytes();
    while let Some(c) = chars.next() {
        if c != b'\\' {
            out.push(c);
            continue;
        }
        match chars.next().ok_or("dangling escape")? {
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'r' => out.push(b'\r'),
            b'0' => out.push(0),
            b'x' => {
                let hi = chars.next().ok_or("short \\x escape")?;
                let lo = chars.next().ok_or("short \\x escape")?;
                let hex = [hi, lo];
                let h = std::str::from_utf8(&hex).map_err(|e| e.to_string())?;
                out.push(u8::from_str_radix(h, 16).map_err(|e| e.to_string())?);
            }
            other => out.push(other),
        }
    }
    Ok(latin1(&out))
}

fn unescape_raw_unicode(s: &str) -> PResult<String> {
    let mut out = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\\' && matches!(chars.peek(), Some('u') | Some('U')) {
            let width = if chars.next() == Some('u') { 4 } else { 8 };
            let hex: String = chars.by_ref().take(width).collect();
            let code = u32::from_str_radix(&hex, 16).map_err(|e| e.to_string())?;
            out.push(char::from_u32(code).ok_or("invalid code point")?);
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// Dense numeric array decoded from a pickled `numpy.ndarray`.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArray {
    pub shape: Vec<usize>,
    /// Row-major (C order) values.
    pub data: Vec<f64>,
}

fn tuple_at(v: &Value, i: usize) -> Option<Value> {
    v.items().and_then(|items| items.get(i).cloned())
}

fn dtype_of(v: &Value) -> PResult<(char, usize, bool)> {
    let obj = match v {
        Value::Object(o) if o.class.ends_with("dtype") => o,
        other => return Err(format!("expected numpy dtype, found {other:?}")),
    };
    let code = obj
        .args
        .first()
        .and_then(Value::as_str)
        .ok_or("dtype without type code")?;
    let (kind, size) = match code {
        "b1" | "?" => ('b', 1),
        c => {
            let kind = c.chars().next().ok_or("empty dtype")?;
            let size = c[1..].parse::<usize>().map_err(|_| format!("dtype {c:?}"))?;
            (kind, size)
        }
    };
    let order = obj
        .state
        .borrow()
        .as_ref()
        .and_then(|s| tuple_at(s, 1))
        .and_then(|o| o.as_str().map(str::to_owned))
        .unwrap_or_else(|| "<".into());
    Ok((kind, size, order == ">"))
}

fn decode_element(chunk: &[u8], kind: char, big: bool) -> PResult<f64> {
    let mut b = chunk.to_vec();
    if big {
        b.reverse();
    }
    Ok(match (kind, b.len()) {
        ('f', 8) => f64::from_le_bytes(b.try_into().unwrap()),
        ('f', 4) => f32::from_le_bytes(b.try_into().unwrap()) as f64,
        ('i', 8) => i64::from_le_bytes(b.try_into().unwrap()) as f64,
        ('i', 4) => i32::from_le_bytes(b.try_into().unwrap()) as f64,
        ('i', 2) => i16::from_le_bytes(b.try_into().unwrap()) as f64,
        ('i', 1) => b[0] as i8 as f64,
        ('u', 8) => u64::from_le_bytes(b.try_into().unwrap()) as f64,
        ('u', 4) => u32::from_le_bytes(b.try_into().unwrap()) as f64,
        ('u', 2) => u16::from_le_bytes(b.try_into().unwrap()) as f64,
        ('u', 1) | ('b', 1) => b[0] as f64,
        (k, s) => return Err(format!("unsupported dtype {k}{s}")),
    })
}

/// Converts a pickled `numpy.ndarray` into a dense row-major array.
pub fn to_ndarray(v: &Value) -> PResult<NdArray> {
    let obj = match v {
        Value::Object(o) if o.class.ends_with("ndarray") || o.class.ends_with("matrix") => o,
        other => return Err(format!("expected numpy array, found {}", describe(other))),
    };
    let state = obj.state.borrow();
    let state = state.as_ref().ok_or("array without state")?;
    let items = state.items().ok_or("array state is not a tuple")?;
    // (version, shape, dtype, fortran, data) or the legacy form without version.
    let items = if items.len() == 5 { &items[1..] } else { &items[..] };
    if items.len() != 4 {
        return Err(format!("array state has {} fields", items.len()));
    }
    let shape: Vec<usize> = items[0]
        .items()
        .ok_or("array shape is not a tuple")?
        .iter()
        .map(|x| x.as_int().map(|i| i as usize).ok_or("bad shape entry"))
        .collect::<std::result::Result<_, _>>()?;
    let (kind, size, big) = dtype_of(&items[1])?;
    let fortran = items[2].as_int().unwrap_or(0) != 0;
    let count: usize = shape.iter().product();
    let data = match &items[3] {
        Value::List(l) => l
            .borrow()
            .iter()
            .map(|x| match x {
                Value::Float(f) => Ok(*f),
                other => other.as_int().map(|i| i as f64).ok_or("non-numeric list"),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?,
        raw => {
            let bytes = raw.to_bytes().ok_or("array data is not a buffer")?;
            if bytes.len() != count * size {
                return Err(format!(
                    "array buffer has {} bytes, expected {}",
                    bytes.len(),
                    count * size
                ));
            }
            bytes
                .chunks_exact(size)
                .map(|c| decode_element(c, kind, big))
                .collect::<PResult<Vec<_>>>()?
        }
    };
    if data.len() != count {
        return Err("array element count does not match shape".into());
    }
    let data = if fortran && shape.len() == 2 {
        let (r, c) = (shape[0], shape[1]);
        let mut out = vec![0.0; count];
        for j in 0..c {
            for i in 0..r {
                out[i * c + j] = data[j * r + i];
            }
        }
        out
    } else {
        data
    };
    Ok(NdArray { shape, data })
}

/// Compressed sparse row matrix from a pickled `scipy.sparse.csr_matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[k])] += self.data[k];
            }
        }
        m
    }
}

pub fn to_csr(v: &Value) -> PResult<Csr> {
    let obj = match v {
        Value::Object(o) if o.class.ends_with("csr_matrix") || o.class.ends_with("csr_array") => o,
        other => return Err(format!("expected scipy CSR matrix, found {}", describe(other))),
    };
    let state = obj.state.borrow();
    let state = state.as_ref().ok_or("matrix without state")?;
    let field = |k: &str| state.get(k).ok_or(format!("matrix state lacks {k:?}"));
    let shape = field("_shape")?
        .items()
        .ok_or("matrix shape is not a tuple")?;
    let (rows, cols) = match shape.as_slice() {
        [r, c] => (
            r.as_int().ok_or("bad shape")? as usize,
            c.as_int().ok_or("bad shape")? as usize,
        ),
        _ => return Err("matrix shape must have two entries".into()),
    };
    let as_usize = |a: NdArray| a.data.into_iter().map(|x| x as usize).collect::<Vec<_>>();
    let indptr = as_usize(to_ndarray(&field("indptr")?)?);
    let indices = as_usize(to_ndarray(&field("indices")?)?);
    let data = to_ndarray(&field("data")?)?.data;
    if indptr.len() != rows + 1
        || indices.len() != data.len()
        || indptr.last().copied() != Some(data.len())
        || indptr.windows(2).any(|w| w[0] > w[1])
        || indices.iter().any(|&c| c >= cols)
    {
        return Err("inconsistent CSR structure".into());
    }
    Ok(Csr {
        rows,
        cols,
        indptr,
        indices,
        data,
    })
}

/// Dense matrix from either a numpy array or a scipy CSR matrix.
pub fn to_dense_matrix(v: &Value) -> PResult<ndarray::Array2<f64>> {
    if let Value::Object(o) = v {
        if o.class.ends_with("csr_matrix") || o.class.ends_with("csr_array") {
            return Ok(to_csr(v)?.to_dense());
        }
    }
    let a = to_ndarray(v)?;
    match a.shape.as_slice() {
        [r, c] => Ok(ndarray::Array2::from_shape_vec((*r, *c), a.data).expect("shape")),
        [r] => Ok(ndarray::Array2::from_shape_vec((*r, 1), a.data).expect("shape")),
        s => Err(format!("expected a 2-D array, found shape {s:?}")),
    }
}

/// Adjacency lists from a dict (or defaultdict) mapping node -> neighbours.
pub fn to_adjacency(v: &Value) -> PResult<Vec<(usize, Vec<usize>)>> {
    let d = match v {
        Value::Dict(d) => d.borrow(),
        other => return Err(format!("expected a dict, found {}", describe(other))),
    };
    d.iter()
        .map(|(k, vs)| {
            let key = k.as_int().ok_or("non-integer node key")?;
            let nbrs = vs
                .items()
                .ok_or("neighbour list is not a list")?
                .iter()
                .map(|x| x.as_int().filter(|&i| i >= 0).map(|i| i as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or("non-integer neighbour")?;
            if key < 0 {
                return Err("negative node key".to_string());
            }
            Ok((key as usize, nbrs))
        })
        .collect()
}

fn describe(v: &Value) -> String {
    match v {
        Value::Object(o) => format!("object of {}", o.class),
        Value::Dict(_) => "dict".into(),
        Value::List(_) => "list".into(),
        Value::Tuple(_) => "tuple".into(),
        other => format!("{other:?}"),
    }
}
