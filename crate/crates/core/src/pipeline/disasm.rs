//! Reading compiler output back into instructions. Accepts assembler text
//! (`clang -S`, `gcc -S`) and `objdump -dr` listings, where symbolic
//! operands are recovered from the relocation records.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Error;
use crate::litmus::{parse_instruction, AsmLine, Instruction, Location};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relocation {
    pub function: String,
    pub offset: u64,
    pub kind: String,
    pub symbol: Location,
}

/// Symbolic locations recovered from the listing, keyed by function and
/// instruction offset (the instruction index for assembler text).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolMap {
    pub entries: BTreeMap<(String, u64), Location>,
    pub relocations: Vec<Relocation>,
}

impl SymbolMap {
    pub fn symbols(&self) -> BTreeSet<&Location> {
        self.entries.values().collect()
    }

    fn record(&mut self, function: &str, offset: u64, kind: &str, symbol: Location) -> Result<(), Error> {
        let key = (function.to_string(), offset);
        if let Some(prev) = self.entries.get(&key) {
            if *prev != symbol {
                return Err(Error::AmbiguousMapping(format!("{function}+{offset:#x}")));
            }
        }
        self.entries.insert(key, symbol.clone());
        self.relocations.push(Relocation {
            function: function.to_string(),
            offset,
            kind: kind.to_string(),
            symbol,
        });
        Ok(())
    }
}

/// Functions in listing order, each as parsed instruction lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Disassembly {
    pub functions: BTreeMap<String, Vec<AsmLine>>,
}

/// Mnemonics with no memory or register effect the engine cares about.
fn is_ignorable(mnemonic: &str) -> bool {
    matches!(mnemonic, "nop" | "hint" | "bti" | "paciasp" | "autiasp")
}

/// Map aliases the instruction parser does not know to their base forms.
fn canonical(mnemonic: &str, ops: &str) -> String {
    match mnemonic {
        "cmp" => {
            let zr = if ops.trim_start().starts_with('x') { "xzr" } else { "wzr" };
            format!("subs {zr}, {ops}")
        }
        _ if ops.is_empty() => mnemonic.to_string(),
        _ => format!("{mnemonic} {ops}"),
    }
}

fn label_name(l: &str) -> String {
    l.trim_start_matches('.').to_string()
}

fn split_mnemonic(text: &str) -> (String, &str) {
    match text.find(char::is_whitespace) {
        Some(i) => (text[..i].to_ascii_lowercase(), text[i..].trim()),
        None => (text.to_ascii_lowercase(), ""),
    }
}

/// Returns within a function body become branches to an exit label.
struct FunctionBuilder {
    name: String,
    lines: Vec<AsmLine>,
    returns: Vec<usize>,
}

impl FunctionBuilder {
    fn new(name: &str) -> Self {
        FunctionBuilder {
            name: name.to_string(),
            lines: Vec::new(),
            returns: Vec::new(),
        }
    }

    fn ret(&mut self) {
        self.returns.push(self.lines.len());
        self.lines.push(AsmLine::Instr(Instruction::B {
            target: String::new(),
        }));
    }

    fn finish(mut self, out: &mut Disassembly) {
        while matches!(self.lines.last(), Some(AsmLine::Instr(Instruction::B { target })) if target.is_empty()) {
            self.lines.pop();
            self.returns.pop();
        }
        if !self.returns.is_empty() {
            let exit = format!("{}_exit", self.name);
            for &i in &self.returns {
                if let Some(AsmLine::Instr(Instruction::B { target })) = self.lines.get_mut(i) {
                    *target = exit.clone();
                }
            }
            self.lines.push(AsmLine::Label(exit));
        }
        out.functions.insert(self.name, self.lines);
    }
}

fn record_operand_symbols(map: &mut SymbolMap, f: &str, idx: u64, i: &Instruction) -> Result<(), Error> {
    for s in i.symbols() {
        let base = s.as_str().strip_suffix("@got").map(Location::new).unwrap_or(s);
        map.record(f, idx, "symbolic", base)?;
    }
    Ok(())
}

/// Parse assembler text as emitted by `-S`.
pub fn parse_assembly(text: &str) -> Result<(Disassembly, SymbolMap), Error> {
    let mut out = Disassembly::default();
    let mut map = SymbolMap::default();
    let mut current: Option<FunctionBuilder> = None;
    for raw in text.lines() {
        let line = raw.split("//").next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(label) = line.strip_suffix(':') {
            if label.starts_with(".LBB") || label.starts_with(".Ltmp") {
                if let Some(f) = current.as_mut() {
                    f.lines.push(AsmLine::Label(label_name(label)));
                }
            } else if label.starts_with('.') {
                if let Some(f) = current.take() {
                    f.finish(&mut out);
                }
            } else {
                if let Some(f) = current.take() {
                    f.finish(&mut out);
                }
                current = Some(FunctionBuilder::new(label));
            }
            continue;
        }
        if line.starts_with('.') {
            continue;
        }
        let Some(f) = current.as_mut() else { continue };
        let (m, ops) = split_mnemonic(line);
        if is_ignorable(&m) {
            continue;
        }
        if m == "ret" {
            f.ret();
            continue;
        }
        let ops = ops
            .split(',')
            .map(|o| if o.trim().starts_with(".L") { label_name(o.trim()) } else { o.trim().to_string() })
            .collect::<Vec<_>>()
            .join(", ");
        let instr = parse_instruction(&canonical(&m, &ops))?;
        record_operand_symbols(&mut map, &f.name, f.lines.len() as u64, &instr)?;
        f.lines.push(AsmLine::Instr(instr));
    }
    if let Some(f) = current.take() {
        f.finish(&mut out);
    }
    Ok((out, map))
}

struct ObjLine {
    offset: u64,
    mnemonic: String,
    ops: String,
    relocs: Vec<(String, Location)>,
}

fn parse_hex(s: &str) -> Option<u64> {
    u64::from_str_radix(s.trim().trim_start_matches("0x"), 16).ok()
}

/// Rewrite a numeric operand into its relocated symbolic form.
fn apply_relocation(mnemonic: &str, ops: &str, kind: &str, sym: &Location) -> Option<String> {
    let operands: Vec<&str> = ops.splitn(2, ',').map(str::trim).collect();
    let rd = operands.first()?;
    let mem_base = || {
        let inner = ops[ops.find('[')? + 1..ops.find(']')?].trim();
        let base = inner.split(',').next()?.trim();
        Some((ops[..ops.find('[')?].trim().trim_end_matches(',').to_string(), base.to_string()))
    };
    match kind {
        "R_AARCH64_ADR_GOT_PAGE" => Some(format!("{rd}, :got:{sym}")),
        "R_AARCH64_ADR_PREL_PG_HI21" => Some(format!("{rd}, {sym}")),
        "R_AARCH64_LD64_GOT_LO12_NC" => {
            let (head, base) = mem_base()?;
            Some(format!("{head}, [{base}, :got_lo12:{sym}]"))
        }
        "R_AARCH64_ADD_ABS_LO12_NC" if mnemonic == "add" => {
            let parts: Vec<&str> = ops.split(',').map(str::trim).collect();
            Some(format!("{}, {}, :lo12:{sym}", parts.first()?, parts.get(1)?))
        }
        k if k.starts_with("R_AARCH64_LDST") && k.ends_with("_ABS_LO12_NC") => {
            let (head, base) = mem_base()?;
            Some(format!("{head}, [{base}, :lo12:{sym}]"))
        }
        _ => None,
    }
}

/// Parse `objdump -dr` output. Relocation records attach to the
/// instruction at their offset; branch targets become labels.
pub fn parse_objdump(text: &str) -> Result<(Disassembly, SymbolMap), Error> {
    let mut funcs: Vec<(String, Vec<ObjLine>)> = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        // Function header: `0000000000000000 <P0>:`
        if let (Some(lt), true) = (line.find('<'), line.ends_with(">:")) {
            if parse_hex(&line[..lt]).is_some() {
                funcs.push((line[lt + 1..line.len() - 2].to_string(), Vec::new()));
                continue;
            }
        }
        let Some((addr, rest)) = line.split_once(':') else { continue };
        let Some(offset) = parse_hex(addr) else { continue };
        let Some((_, lines)) = funcs.last_mut() else { continue };
        let rest = rest.trim();
        if rest.starts_with("R_AARCH64") {
            let mut it = rest.split_whitespace();
            let kind = it.next().unwrap_or_default().to_string();
            let sym = it.next().ok_or_else(|| Error::UnmappedAddress(format!("{offset:#x}")))?;
            if sym.contains('+') || sym.contains('-') {
                return Err(Error::UnsupportedConstruct(format!("relocation with addend `{sym}`")));
            }
            let target = lines
                .iter_mut()
                .rev()
                .find(|l| l.offset == offset)
                .ok_or_else(|| Error::UnmappedAddress(format!("{offset:#x}")))?;
            target.relocs.push((kind, Location::new(sym)));
            continue;
        }
        // `<hex bytes>\t<mnemonic>\t<operands>`; bytes are separated from
        // the mnemonic by a tab.
        let mut cols = rest.split('\t').map(str::trim).filter(|c| !c.is_empty());
        let _bytes = cols.next();
        let Some(mnemonic) = cols.next() else { continue };
        let ops = cols.collect::<Vec<_>>().join(" ");
        lines.push(ObjLine {
            offset,
            mnemonic: mnemonic.to_ascii_lowercase(),
            ops,
            relocs: Vec::new(),
        });
    }

    let mut out = Disassembly::default();
    let mut map = SymbolMap::default();
    for (name, lines) in funcs {
        let targets: BTreeSet<u64> = lines
            .iter()
            .filter(|l| is_branch(&l.mnemonic))
            .filter_map(|l| branch_address(&l.ops))
            .collect();
        let offsets: BTreeSet<u64> = lines.iter().map(|l| l.offset).collect();
        let end = lines.last().map(|l| l.offset + 4);
        for t in &targets {
            if !offsets.contains(t) && Some(*t) != end {
                return Err(Error::UnmappedAddress(format!("{name}+{t:#x}")));
            }
        }
        let label = |a: u64| format!("L{name}_{a:x}");
        let mut f = FunctionBuilder::new(&name);
        for l in &lines {
            if targets.contains(&l.offset) {
                f.lines.push(AsmLine::Label(label(l.offset)));
            }
            if is_ignorable(&l.mnemonic) {
                continue;
            }
            if l.mnemonic == "ret" {
                f.ret();
                continue;
            }
            let mut ops = strip_comment(&l.ops).to_string();
            for (kind, sym) in &l.relocs {
                ops = apply_relocation(&l.mnemonic, &ops, kind, sym)
                    .ok_or_else(|| Error::UnsupportedConstruct(format!("{kind} on `{} {}`", l.mnemonic, l.ops)))?;
                map.record(&name, l.offset, kind, sym.clone())?;
            }
            if is_branch(&l.mnemonic) {
                let a = branch_address(&l.ops).ok_or_else(|| Error::BadOperands(l.ops.clone()))?;
                let mut parts: Vec<String> = ops.split(',').map(|s| s.trim().to_string()).collect();
                if let Some(last) = parts.last_mut() {
                    *last = label(a);
                }
                ops = parts.join(", ");
            } else if l.mnemonic == "adrp" && l.relocs.is_empty() {
                return Err(Error::UnmappedAddress(format!("{name}+{:#x}", l.offset)));
            }
            let instr = parse_instruction(&canonical(&l.mnemonic, &ops))?;
            f.lines.push(AsmLine::Instr(instr));
        }
        if let Some(e) = end.filter(|e| targets.contains(e)) {
            f.lines.push(AsmLine::Label(label(e)));
        }
        f.finish(&mut out);
    }
    Ok((out, map))
}

fn strip_comment(ops: &str) -> &str {
    ops.split("//").next().unwrap_or("").trim()
}

fn is_branch(m: &str) -> bool {
    m == "b" || m.starts_with("b.") || matches!(m, "cbz" | "cbnz")
}

/// The numeric target of a branch: the last operand, before any `<sym+off>`.
fn branch_address(ops: &str) -> Option<u64> {
    let last = ops.rsplit(',').next()?.trim();
    let num = last.split('<').next()?.trim();
    parse_hex(num)
}

/// Choose the parser by content.
pub fn parse_listing(text: &str) -> Result<(Disassembly, SymbolMap), Error> {
    let objdump = text
        .lines()
        .any(|l| l.contains("file format") || (l.trim_end().ends_with(">:") && l.contains(" <")));
    if objdump {
        parse_objdump(text)
    } else {
        parse_assembly(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litmus::{render_instruction, AddrMode};

    fn rendered(d: &Disassembly, f: &str) -> Vec<String> {
        d.functions[f]
            .iter()
            .map(|l| match l {
                AsmLine::Label(s) => format!("{s}:"),
                AsmLine::Instr(i) => render_instruction(i),
            })
            .collect()
    }

    const CLANG_S: &str = "\t.text
\t.file\t\"lb.c\"
\t.globl\tP0                              // -- Begin function P0
\t.p2align\t2
\t.type\tP0,@function
P0:                                     // @P0
\t.cfi_startproc
// %bb.0:
\tadrp\tx8, :got:x
\tadrp\tx9, :got:y
\tmov\tw10, #1
\tldr\tx8, [x8, :got_lo12:x]
\tldr\tx9, [x9, :got_lo12:y]
\tldr\twzr, [x8]
\tstr\tw10, [x9]
\tret
.Lfunc_end0:
\t.size\tP0, .Lfunc_end0-P0
\t.cfi_endproc
";

    #[test]
    fn clang_assembly() {
        let (d, m) = parse_listing(CLANG_S).unwrap();
        assert_eq!(
            rendered(&d, "P0"),
            [
                "ADRP X8,:got:x",
                "ADRP X9,:got:y",
                "MOV W10,#1",
                "LDR X8,[X8,:got_lo12:x]",
                "LDR X9,[X9,:got_lo12:y]",
                "LDR WZR,[X8]",
                "STR W10,[X9]"
            ]
        );
        let syms: Vec<&str> = m.symbols().into_iter().map(Location::as_str).collect();
        assert_eq!(syms, ["x", "y"]);
    }

    #[test]
    fn early_return_branches_to_exit() {
        let s = "P0:\n\tcbz\tw0, .LBB0_2\n\tret\n.LBB0_2:\n\tmov\tw1, #1\n\tret\n.Lfunc_end0:\n";
        let (d, _) = parse_assembly(s).unwrap();
        assert_eq!(
            rendered(&d, "P0"),
            ["CBZ W0,LBB0_2", "B P0_exit", "LBB0_2:", "MOV W1,#1", "P0_exit:"]
        );
    }

    const OBJDUMP: &str = "
lb.o:     file format elf64-littleaarch64


Disassembly of section .text:

0000000000000000 <P0>:
       0: 90000008     \tadrp\tx8, 0x0 <P0>
\t\t0000000000000000:  R_AARCH64_ADR_GOT_PAGE\tx
       4: f9400108     \tldr\tx8, [x8]
\t\t0000000000000004:  R_AARCH64_LD64_GOT_LO12_NC\tx
       8: b9400100     \tldr\tw0, [x8]
       c: 34000040     \tcbz\tw0, 0x14 <P0+0x14>
      10: 52800020     \tmov\tw0, #0x1
      14: 90000009     \tadrp\tx9, 0x0 <P0>
\t\t0000000000000014:  R_AARCH64_ADR_PREL_PG_HI21\ty
      18: b9000120     \tstr\tw0, [x9]
\t\t0000000000000018:  R_AARCH64_LDST32_ABS_LO12_NC\ty
      1c: d65f03c0     \tret
";

    #[test]
    fn objdump_relocations() {
        let (d, m) = parse_listing(OBJDUMP).unwrap();
        let body = &d.functions["P0"];
        assert_eq!(
            rendered(&d, "P0"),
            [
                "ADRP X8,:got:x",
                "LDR X8,[X8,:got_lo12:x]",
                "LDR W0,[X8]",
                "CBZ W0,LP0_14",
                "MOV W0,#1",
                "LP0_14:",
                "ADRP X9,y",
                "STR W0,[X9,:lo12:y]"
            ]
        );
        assert!(matches!(
            body.last(),
            Some(AsmLine::Instr(Instruction::Store { addr: AddrMode::BaseLo12 { got: false, .. }, .. }))
        ));
        assert_eq!(m.relocations.len(), 4);
        assert_eq!(m.entries[&("P0".to_string(), 0x18)], Location::new("y"));
    }

    #[test]
    fn unrelocated_page_address_is_unmapped() {
        let text = "0000000000000000 <P0>:\n       0: 90000008     \tadrp\tx8, 0x1000 <P0+0x1000>\n       4: d65f03c0     \tret\n";
        assert!(matches!(parse_objdump(text), Err(Error::UnmappedAddress(_))));
    }
}
