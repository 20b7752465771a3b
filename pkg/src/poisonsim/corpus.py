"""Synthetic labeled PE corpus and donor-material harvesting.

Benign and malicious samples share the same structural skeleton and
overlapping content generators, so the classes are learnable but not
trivially separable: malicious samples tend to carry characteristic
import combinations, high-entropy payload sections, and marker strings,
each with per-sample dropout.  A configurable fraction of near-duplicates
(copies with a few dozen mutated bytes) exercises deduplication.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lsh
from .errors import EmptyInput
from .hashing import rng_for
from .pe import (
    DATA_SECTION_FLAGS,
    SCN_CNT_CODE,
    SCN_CNT_INITIALIZED_DATA,
    SCN_MEM_EXECUTE,
    SCN_MEM_READ,
    SCN_MEM_WRITE,
    ImportDescriptor,
    Machine,
    PEImage,
    Section,
    align_up,
    build_import_section,
    default_dos_stub,
    make_section,
    parse,
    serialize,
)

SECTION_ALIGNMENT = 0x1000
FILE_ALIGNMENT = 0x200
IMAGE_BASE = 0x140000000

BENIGN_IMPORTS: dict[str, tuple[str, ...]] = {
    "kernel32.dll": (
        "GetModuleHandleW", "GetProcAddress", "LoadLibraryW", "ExitProcess",
        "GetLastError", "CloseHandle", "CreateFileW", "ReadFile", "WriteFile",
        "GetTickCount", "Sleep", "HeapAlloc", "HeapFree", "GetCurrentProcess",
        "GetCommandLineW", "GetStdHandle", "QueryPerformanceCounter",
        "FindFirstFileW", "FormatMessageW", "MultiByteToWideChar",
    ),
    "user32.dll": (
        "MessageBoxW", "LoadIconW", "LoadCursorW", "RegisterClassExW",
        "CreateWindowExW", "ShowWindow", "UpdateWindow", "GetMessageW",
        "TranslateMessage", "DispatchMessageW", "DefWindowProcW",
        "PostQuitMessage", "SendMessageW",
    ),
    "gdi32.dll": (
        "SelectObject", "DeleteObject", "BitBlt", "CreateCompatibleDC",
        "TextOutW", "SetBkMode",
    ),
    "advapi32.dll": (
        "RegOpenKeyExW", "RegQueryValueExW", "RegCloseKey",
        "OpenProcessToken", "GetUserNameW",
    ),
    "msvcrt.dll": (
        "malloc", "free", "memcpy", "memset", "printf", "fopen", "fclose",
        "fread", "fwrite", "strlen", "strcmp", "_initterm", "exit",
    ),
    "shell32.dll": ("ShellExecuteW", "SHGetFolderPathW", "CommandLineToArgvW"),
    "ole32.dll": ("CoInitialize", "CoUninitialize", "CoCreateInstance"),
    "comctl32.dll": ("InitCommonControlsEx",),
    "ws2_32.dll": ("WSAStartup", "socket", "connect", "send", "recv", "closesocket"),
}

SUSPICIOUS_IMPORTS: dict[str, tuple[str, ...]] = {
    "kernel32.dll": (
        "VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread",
        "OpenProcess", "VirtualProtect", "IsDebuggerPresent",
        "CreateToolhelp32Snapshot", "Process32NextW",
    ),
    "advapi32.dll": (
        "CryptEncrypt", "CryptAcquireContextW", "CryptGenKey",
        "RegSetValueExW", "AdjustTokenPrivileges", "CreateServiceW",
    ),
    "wininet.dll": (
        "InternetOpenA", "InternetOpenUrlA", "InternetReadFile",
        "HttpSendRequestA",
    ),
    "urlmon.dll": ("URLDownloadToFileA",),
    "ws2_32.dll": ("WSASocketA", "gethostbyname"),
    "psapi.dll": ("EnumProcesses", "GetModuleFileNameExW"),
    "ntdll.dll": ("NtQueryInformationProcess", "RtlAdjustPrivilege"),
    "dbghelp.dll": ("MiniDumpWriteDump",),
}

BENIGN_STRINGS = (
    b"Copyright (C) 2019 Contoso Systems. All rights reserved.",
    b"ProductVersion 4.2.1100.8", b"FileDescription Update Helper Service",
    b"C:\\Program Files\\Common Files\\system\\config.ini",
    b"Software\\Microsoft\\Windows\\CurrentVersion\\Run",
    b"https://download.vendor-updates.com/catalog.xml",
    b"Error: unable to open file '%s' (code %d)",
    b"Usage: tool.exe [options] <input> <output>",
    b"SELECT name, value FROM settings WHERE profile = ?",
    b"en-US resources loaded successfully",
    b"Invalid argument passed to function",
    b"&File, &Edit, &View, &Help",
    b"The operation completed successfully.",
    b"application/x-msdownload",
    b"Mozilla/5.0 (Windows NT 10.0; Win64; x64)",
    b"Failed to initialize COM library",
    b"%SystemRoot%\\System32\\drivers\\etc\\hosts",
    b"Documents and Settings synchronization finished",
)

MARKER_STRINGS = (
    b"cmd.exe /c vssadmin delete shadows /all /quiet",
    b"YOUR FILES HAVE BEEN ENCRYPTED",
    b"DisableTaskMgr", b"SeDebugPrivilege",
    b"powershell -nop -w hidden -enc",
    b"http://upd-sync.badcdn.example/payload.bin",
    b"Global\\mtx_7f3c9e21", b"bc1qxy2kgdygjrsqtzq2n0yrf2493p83kkfjhx0wlh",
    b"taskkill /f /im msmpeng.exe",
    b"\\\\.\\pipe\\remcmd", b"keylog.tmp",
    b"schtasks /create /sc onlogon /tn WinSvcHost",
)

# Loose x64-flavored byte alphabet for code-like payloads.
_CODE_ALPHABET = np.array([
    0x48, 0x8B, 0x89, 0x8D, 0xE8, 0xFF, 0xC3, 0x55, 0x5D, 0x90, 0x83, 0x0F,
    0x41, 0x44, 0x4C, 0x85, 0x74, 0x75, 0xEB, 0x33, 0xC0, 0xB8, 0x01, 0x00,
    0x24, 0x0C, 0x40, 0x50, 0x58, 0xCC, 0x66, 0x0B,
], dtype=np.uint8)
_CODE_WEIGHTS = np.linspace(2.0, 0.4, len(_CODE_ALPHABET))
_CODE_WEIGHTS /= _CODE_WEIGHTS.sum()
_CODE_CUM = np.cumsum(_CODE_WEIGHTS)


@dataclass
class LabeledSample:
    """One corpus entry; `label` 0 = benign, 1 = malicious."""

    id: str
    image: PEImage
    label: int
    origin: str = "synthetic"  # "synthetic" | "mutated"
    _raw: bytes | None = field(default=None, repr=False, compare=False)

    def file_bytes(self) -> bytes:
        if self._raw is None:
            self._raw = serialize(self.image)
        return self._raw


@dataclass(frozen=True)
class DonorPool:
    """Benign material available for injection."""

    sections: tuple[Section, ...]
    imports: tuple[ImportDescriptor, ...]


@dataclass(frozen=True)
class CorpusConfig:
    near_dup_rate: float = 0.05
    min_section_kib: int = 2
    max_section_kib: int = 24


def _weighted_code_bytes(rng: np.random.Generator, n: int) -> np.ndarray:
    picks = np.searchsorted(_CODE_CUM, rng.random(n))
    out = _CODE_ALPHABET[picks]
    # Sprinkle raw immediates so the distribution is not purely the alphabet.
    n_imm = n // 16
    if n_imm:
        pos = rng.integers(0, max(n - 4, 1), n_imm)
        out[pos] = rng.integers(0, 256, n_imm, dtype=np.uint8)
    return out


def _strings_blob(rng: np.random.Generator, pool, count: int, pad_to: int) -> bytes:
    parts = []
    for _ in range(count):
        parts.append(bytes(pool[rng.integers(0, len(pool))]))
        parts.append(b"\x00" * int(rng.integers(1, 8)))
    blob = b"".join(parts)
    if len(blob) < pad_to:
        blob += b"\x00" * (pad_to - len(blob))
    return blob


def _low_entropy_bytes(rng: np.random.Generator, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.uint8)
    n_vals = n // 8
    pos = rng.integers(0, n, n_vals)
    out[pos] = rng.integers(0, 64, n_vals, dtype=np.uint8)
    return out


def _medium_entropy_bytes(rng: np.random.Generator, n: int) -> np.ndarray:
    # Random bytes diluted with zero runs: entropy roughly 4-7 bits.
    out = rng.integers(0, 256, n, dtype=np.uint8)
    n_holes = max(1, n // 512)
    for _ in range(n_holes):
        start = int(rng.integers(0, max(n - 64, 1)))
        out[start : start + int(rng.integers(16, 64))] = 0
    return out


def _section_size(rng: np.random.Generator, config: CorpusConfig) -> int:
    lo, hi = config.min_section_kib, config.max_section_kib
    return int(rng.integers(lo * 1024, hi * 1024))


def _pick_imports(
    rng: np.random.Generator, pool: dict[str, tuple[str, ...]], n_dlls: int
) -> dict[str, list[str]]:
    names = list(pool)
    chosen = rng.choice(len(names), size=min(n_dlls, len(names)), replace=False)
    out: dict[str, list[str]] = {}
    for idx in sorted(chosen):
        dll = names[idx]
        functions = pool[dll]
        k = int(rng.integers(2, min(10, len(functions)) + 1)) if len(functions) > 1 else 1
        picked = rng.choice(len(functions), size=min(k, len(functions)), replace=False)
        out[dll] = [functions[i] for i in sorted(picked)]
    return out


def _merge_imports(base: dict[str, list[str]], extra: dict[str, list[str]]) -> None:
    for dll, functions in extra.items():
        existing = base.setdefault(dll, [])
        for fn in functions:
            if fn not in existing:
                existing.append(fn)


def _assemble(
    rng: np.random.Generator,
    payloads: list[tuple[str, bytes, int]],
    imports: dict[str, list[str]],
) -> PEImage:
    """Lay sections out at ascending aligned addresses, imports last."""
    descriptors = tuple(
        ImportDescriptor(dll, tuple(fns)) for dll, fns in imports.items()
    )
    sections = []
    va = SECTION_ALIGNMENT
    for name, data, flags in payloads:
        sections.append(make_section(name, data, va, flags, FILE_ALIGNMENT))
        va = align_up(va + max(len(data), 1), SECTION_ALIGNMENT)

    import_dir = iat_dir = (0, 0)
    if descriptors:
        payload, import_dir, iat_dir = build_import_section(descriptors, va)
        sections.append(
            make_section(".idata", payload, va, DATA_SECTION_FLAGS, FILE_ALIGNMENT)
        )

    entry = sections[0].virtual_address + int(
        rng.integers(0, max(sections[0].virtual_size - 16, 1))
    )
    return PEImage(
        machine=Machine.X64,
        timestamp=int(rng.integers(1_500_000_000, 1_800_000_000)),
        checksum=int(rng.integers(0, 2**32)),
        entry_point_rva=entry,
        image_base=IMAGE_BASE,
        section_alignment=SECTION_ALIGNMENT,
        file_alignment=FILE_ALIGNMENT,
        subsystem=int(rng.choice([2, 3])),
        sections=tuple(sections),
        imports=descriptors,
        dos_stub=default_dos_stub(),
        import_dir=import_dir,
        iat_dir=iat_dir,
    )


_TEXT_FLAGS = SCN_CNT_CODE | SCN_MEM_READ | SCN_MEM_EXECUTE
_DATA_FLAGS = SCN_CNT_INITIALIZED_DATA | SCN_MEM_READ | SCN_MEM_WRITE
_RDATA_FLAGS = SCN_CNT_INITIALIZED_DATA | SCN_MEM_READ


def _benign_image(rng: np.random.Generator, config: CorpusConfig) -> PEImage:
    payloads = [
        (".text", _weighted_code_bytes(rng, _section_size(rng, config)).tobytes(), _TEXT_FLAGS),
        (".rdata", _strings_blob(rng, BENIGN_STRINGS, int(rng.integers(8, 26)),
                                 _section_size(rng, config) // 2), _RDATA_FLAGS),
        (".data", _low_entropy_bytes(rng, _section_size(rng, config)).tobytes(), _DATA_FLAGS),
    ]
    if rng.random() < 0.35:
        payloads.append(
            (".rsrc", _medium_entropy_bytes(rng, _section_size(rng, config)).tobytes(),
             _RDATA_FLAGS)
        )
    if rng.random() < 0.12:
        # Compressed-resource lookalike: benign but high entropy.
        payloads.append(
            (".pack", rng.integers(0, 256, _section_size(rng, config), dtype=np.uint8).tobytes(),
             _RDATA_FLAGS)
        )
    imports = _pick_imports(rng, BENIGN_IMPORTS, int(rng.integers(3, 8)))
    if rng.random() < 0.08:
        _merge_imports(imports, _pick_imports(rng, SUSPICIOUS_IMPORTS, 1))
    return _assemble(rng, payloads, imports)


def _malicious_image(rng: np.random.Generator, config: CorpusConfig) -> PEImage:
    packed = rng.random() < 0.35
    text_size = _section_size(rng, config) // (4 if packed else 1)
    payloads = [
        (".text", _weighted_code_bytes(rng, max(text_size, 1024)).tobytes(), _TEXT_FLAGS),
    ]
    marker_count = int(rng.integers(2, 7)) if rng.random() < 0.8 else 0
    strings = list(BENIGN_STRINGS[: len(BENIGN_STRINGS) // 2])
    rdata = _strings_blob(
        rng, strings, int(rng.integers(4, 12)), _section_size(rng, config) // 3
    )
    if marker_count:
        rdata += _strings_blob(rng, MARKER_STRINGS, marker_count, 0)
    payloads.append((".rdata", rdata, _RDATA_FLAGS))
    payloads.append(
        (".data", _low_entropy_bytes(rng, _section_size(rng, config) // 2).tobytes(),
         _DATA_FLAGS)
    )
    if rng.random() < 0.9:
        for i in range(int(rng.integers(1, 3))):
            payloads.append(
                (f".enc{i}", rng.integers(
                    0, 256, _section_size(rng, config), dtype=np.uint8).tobytes(),
                 _RDATA_FLAGS)
            )
    if rng.random() < 0.3:
        payloads.append(
            (".rsrc", _medium_entropy_bytes(rng, _section_size(rng, config) // 2).tobytes(),
             _RDATA_FLAGS)
        )

    if packed:
        imports = _pick_imports(rng, BENIGN_IMPORTS, 1)
        _merge_imports(imports, _pick_imports(rng, SUSPICIOUS_IMPORTS, int(rng.integers(1, 3))))
    else:
        imports = _pick_imports(rng, BENIGN_IMPORTS, int(rng.integers(2, 6)))
        n_sus = int(rng.integers(2, 5))
        for _ in range(n_sus):
            if rng.random() < 0.85:
                _merge_imports(imports, _pick_imports(rng, SUSPICIOUS_IMPORTS, 1))
    return _assemble(rng, payloads, imports)


def _near_duplicate(rng: np.random.Generator, source: PEImage) -> PEImage:
    """Copy with 8..64 bytes mutated inside one payload section."""
    import_rva = source.import_dir[0]
    candidates = [
        i
        for i, s in enumerate(source.sections)
        if len(s.data) >= 64 and not (import_rva and s.contains_rva(import_rva))
    ]
    idx = candidates[int(rng.integers(0, len(candidates)))]
    section = source.sections[idx]
    data = bytearray(section.data)
    n_mut = int(rng.integers(8, 65))
    positions = rng.integers(0, len(data), n_mut)
    values = rng.integers(0, 256, n_mut, dtype=np.uint8)
    for pos, val in zip(positions, values):
        data[pos] = int(val)
    sections = list(source.sections)
    sections[idx] = Section(
        name=section.name,
        virtual_size=section.virtual_size,
        virtual_address=section.virtual_address,
        raw_size=section.raw_size,
        raw_offset=section.raw_offset,
        characteristics=section.characteristics,
        data=bytes(data),
    )
    return PEImage(**{**source.__dict__, "sections": tuple(sections)})


def generate_corpus(
    seed: int,
    n_benign: int,
    n_malicious: int,
    config: CorpusConfig = CorpusConfig(),
) -> list[LabeledSample]:
    """Deterministic labeled corpus; exact class counts, ids stable."""
    if n_benign < 1 or n_malicious < 1:
        raise ValueError("both class counts must be >= 1")

    samples: list[LabeledSample] = []
    for label, prefix, count in ((0, "ben", n_benign), (1, "mal", n_malicious)):
        build = _benign_image if label == 0 else _malicious_image
        images = [
            build(rng_for(seed, "sample", label, i), config) for i in range(count)
        ]
        dup_rng = rng_for(seed, "dups", label)
        n_dups = int(round(config.near_dup_rate * count))
        if n_dups and count > 1:
            targets = dup_rng.choice(np.arange(1, count), size=min(n_dups, count - 1),
                                     replace=False)
            for t in sorted(int(x) for x in targets):
                source = int(dup_rng.integers(0, t))
                images[t] = _near_duplicate(dup_rng, images[source])
        samples.extend(
            LabeledSample(id=f"{prefix}-{i:05d}", image=img, label=label)
            for i, img in enumerate(images)
        )
    return samples


def extract_donors(benign: list[LabeledSample]) -> DonorPool:
    """Harvest all sections and import descriptors from benign samples."""
    if not benign:
        raise EmptyInput("donor extraction needs at least one benign sample")
    if any(s.label != 0 for s in benign):
        raise ValueError("donor pool must be sourced from benign-labeled samples")

    sections: list[Section] = []
    seen_payloads: set[int] = set()
    imports: list[ImportDescriptor] = []
    seen_imports: set[tuple[str, tuple[str, ...]]] = set()
    for sample in benign:
        for section in sample.image.sections:
            if not section.data:
                continue
            key = hash(section.data)
            if key in seen_payloads:
                continue
            seen_payloads.add(key)
            sections.append(
                make_section(section.name, section.data, 0, DATA_SECTION_FLAGS,
                             sample.image.file_alignment)
            )
        for desc in sample.image.imports:
            key = (desc.dll_name.lower(), desc.functions)
            if key in seen_imports:
                continue
            seen_imports.add(key)
            imports.append(desc)
    return DonorPool(sections=tuple(sections), imports=tuple(imports))


def write_corpus(samples: list[LabeledSample], out_dir: str | Path) -> Path:
    """One PE file per sample plus a JSONL manifest with fuzzy digests."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    with manifest_path.open("w") as fh:
        for sample in samples:
            filename = f"{sample.id}.exe"
            raw = sample.file_bytes()
            (out_dir / filename).write_bytes(raw)
            fh.write(json.dumps({
                "id": sample.id,
                "filename": filename,
                "label": sample.label,
                "origin": sample.origin,
                "tlsh": lsh.digest(raw).hex(),
            }) + "\n")
    return manifest_path


def load_corpus(corpus_dir: str | Path) -> list[LabeledSample]:
    corpus_dir = Path(corpus_dir)
    samples = []
    with (corpus_dir / "manifest.jsonl").open() as fh:
        for line in fh:
            record = json.loads(line)
            raw = (corpus_dir / record["filename"]).read_bytes()
            samples.append(
                LabeledSample(
                    id=record["id"],
                    image=parse(raw),
                    label=int(record["label"]),
                    origin=record.get("origin", "synthetic"),
                    _raw=raw,
                )
            )
    return samples
