"""Repository discovery and filtering.

Two discovery sources: a hosting-platform API client (GitHub-shaped, endpoint
configurable, rate limited, resumable) and a static seed file of
`url[@commit]` lines. Filtering applies the platform profile heuristics and
turns surviving descriptors into RepoRecords. An offline cassette transport
replays recorded API responses for tests.
"""

from __future__ import annotations

import json
import os
import random
import re
import stat
import subprocess
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence, Union

from binforge.model import BuildSystem, Platform, RepoRecord, utc_now


class CrawlError(Exception):
    pass


class AuthError(CrawlError):
    """Credentials missing or rejected; message names the endpoint."""


class RateLimitExhaustedError(CrawlError):
    pass


class MalformedSeedError(CrawlError):
    pass


class CloneError(CrawlError):
    pass


class CommitNotFoundError(CloneError):
    """Pinned commit vanished upstream (force-push or deletion)."""


@dataclass
class RepoDescriptor:
    """What discovery learns about a repository without cloning it."""

    url: str
    commit: Optional[str]
    file_count: int
    size_kb: int
    readme_text: str
    paths: list[str]  # repo-relative file paths
    api_license: Optional[str] = None
    default_branch: str = "main"
    local_path: Optional[str] = None  # set for seed entries that exist on disk


@dataclass
class FilterProfile:
    platform: Platform
    min_file_count: int = 10
    min_size_kb: int = 50
    readme_markers: tuple[str, ...] = ("Visual Studio",)
    makefile_search_depth: int = 2

    @classmethod
    def windows(cls) -> "FilterProfile":
        return cls(platform=Platform.WINDOWS)

    @classmethod
    def linux(cls) -> "FilterProfile":
        return cls(platform=Platform.LINUX)


@dataclass
class FilterDecision:
    accepted: bool
    reason: Optional[str] = None  # reject reason code
    record: Optional[RepoRecord] = None


@dataclass
class Cursor:
    """Resumption point for discovery; mutated in place as items are yielded."""

    page: int = 1
    index: int = 0
    checkpoints: int = 0


@dataclass
class DiscoveryLimits:
    max_repos: int = 100
    rate_per_minute: float = 30.0


# -- rate limiting -----------------------------------------------------------------


class RateLimiter:
    """Token bucket at rate_per_minute with jittered pacing.

    clock/sleeper/rng are injectable so the replay harness can assert the
    sliding-window bound without real waiting.
    """

    def __init__(
        self,
        rate_per_minute: float,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        if rate_per_minute <= 0:
            raise ValueError("rate_per_minute must be positive")
        self.interval = 60.0 / rate_per_minute
        self.clock = clock
        self.sleeper = sleeper
        self.rng = rng or random.Random()
        self._next_allowed = clock()

    def acquire(self) -> None:
        now = self.clock()
        if now < self._next_allowed:
            self.sleeper(self._next_allowed - now)
            now = self._next_allowed
        jitter = self.rng.uniform(0.0, 0.1 * self.interval)
        self._next_allowed = now + self.interval + jitter


# -- transports ---------------------------------------------------------------------


class HttpTransport:
    """requests-backed GET transport."""

    def __init__(self, token: Optional[str] = None, timeout: float = 30.0):
        import requests

        self._session = requests.Session()
        self.timeout = timeout
        if token:
            self._session.headers["Authorization"] = f"Bearer {token}"

    def get(self, url: str, params: Optional[dict] = None) -> tuple[int, object]:
        response = self._session.get(url, params=params or {}, timeout=self.timeout)
        try:
            body = response.json()
        except ValueError:
            body = response.text
        return response.status_code, body


def request_key(url: str, params: Optional[dict] = None) -> str:
    query = "&".join(f"{k}={params[k]}" for k in sorted(params or {}))
    return f"GET {url}?{query}" if query else f"GET {url}"


class CassetteTransport:
    """Replays recorded responses from a cassette file.

    Cassette format: {"entries": {request_key: {"status": int, "body": any}}}.
    Every served request is timestamped with the injected clock so tests can
    assert rate compliance.
    """

    def __init__(self, cassette: Union[str, Path, dict], clock: Callable[[], float] = time.monotonic):
        if isinstance(cassette, (str, Path)):
            cassette = json.loads(Path(cassette).read_text())
        self.entries = cassette["entries"]
        self.clock = clock
        self.request_times: list[float] = []
        self.request_log: list[str] = []

    def get(self, url: str, params: Optional[dict] = None) -> tuple[int, object]:
        key = request_key(url, params)
        self.request_times.append(self.clock())
        self.request_log.append(key)
        entry = self.entries.get(key)
        if entry is None:
            raise CrawlError(f"cassette has no entry for {key}")
        return entry["status"], entry["body"]


# -- API client -----------------------------------------------------------------------


@dataclass
class ApiQuery:
    query: str
    endpoint: str = "https://api.github.com"
    token: Optional[str] = None
    per_page: int = 30


@dataclass
class SeedFile:
    path: Union[str, Path]


class HostingApiClient:
    """GitHub-shaped API by default; endpoints are configurable."""

    def __init__(self, source: ApiQuery, transport, limiter: RateLimiter, max_retries: int = 3):
        self.source = source
        self.transport = transport
        self.limiter = limiter
        self.max_retries = max_retries

    def _get(self, path: str, params: Optional[dict] = None) -> object:
        url = f"{self.source.endpoint}{path}"
        backoff = 1.0
        for attempt in range(self.max_retries + 1):
            self.limiter.acquire()
            status, body = self.transport.get(url, params)
            if status in (401, 403):
                raise AuthError(f"authentication failed for {url} (HTTP {status})")
            if status == 429:
                if attempt == self.max_retries:
                    raise RateLimitExhaustedError(
                        f"rate limit persisted after {self.max_retries} retries at {url}"
                    )
                self.limiter.sleeper(backoff)
                backoff *= 2
                continue
            if status != 200:
                raise CrawlError(f"HTTP {status} from {url}")
            return body
        raise CrawlError("unreachable")

    def search_page(self, page: int) -> list[dict]:
        body = self._get(
            "/search/repositories",
            {"q": self.source.query, "page": page, "per_page": self.source.per_page},
        )
        return body.get("items", [])

    def describe(self, item: dict) -> RepoDescriptor:
        full_name = item["full_name"]
        branch = item.get("default_branch", "main")
        head = self._get(f"/repos/{full_name}/commits/{branch}")
        tree = self._get(f"/repos/{full_name}/git/trees/{head['sha']}", {"recursive": "1"})
        paths = [e["path"] for e in tree.get("tree", []) if e.get("type") == "blob"]
        readme_body = ""
        try:
            readme = self._get(f"/repos/{full_name}/readme")
            if isinstance(readme, dict):
                if readme.get("encoding") == "base64":
                    import base64

                    readme_body = base64.b64decode(readme.get("content", "")).decode(
                        "utf-8", "replace"
                    )
                else:
                    readme_body = readme.get("content_text", "")
        except CrawlError:
            pass  # repos without a readme are still describable
        license_field = (item.get("license") or {}).get("spdx_id")
        return RepoDescriptor(
            url=item.get("html_url") or item.get("clone_url") or full_name,
            commit=head["sha"],
            file_count=len(paths),
            size_kb=int(item.get("size", 0)),
            readme_text=readme_body,
            paths=paths,
            api_license=license_field,
            default_branch=branch,
        )


def _describe_local(path: Path, url: str, commit: Optional[str]) -> RepoDescriptor:
    paths = []
    total_bytes = 0
    for file in sorted(path.rglob("*")):
        if not file.is_file() or ".git" in file.parts:
            continue
        paths.append(file.relative_to(path).as_posix())
        total_bytes += file.stat().st_size
    readme_text = ""
    for candidate in ("README.md", "README", "README.txt"):
        readme = path / candidate
        if readme.exists():
            readme_text = readme.read_text(errors="replace")
            break
    if commit is None and (path / ".git").exists():
        probe = subprocess.run(
            ["git", "-C", str(path), "rev-parse", "HEAD"], capture_output=True, text=True
        )
        if probe.returncode == 0:
            commit = probe.stdout.strip()
    return RepoDescriptor(
        url=url,
        commit=commit,
        file_count=len(paths),
        size_kb=total_bytes // 1024,
        readme_text=readme_text,
        paths=paths,
        local_path=str(path),
    )


def parse_seed_line(line: str) -> Optional[tuple[str, Optional[str]]]:
    line = line.strip()
    if not line or line.startswith("#"):
        return None
    url, _, commit = line.partition("@")
    url = url.strip()
    commit = commit.strip() or None
    if not url:
        raise MalformedSeedError(f"seed line has no url: {line!r}")
    if commit is not None and not re.fullmatch(r"[0-9a-f]{40}", commit):
        raise MalformedSeedError(f"seed commit is not 40-hex: {line!r}")
    return url, commit


def discover(
    source: Union[ApiQuery, SeedFile],
    limits: DiscoveryLimits,
    transport=None,
    cursor: Optional[Cursor] = None,
    clock: Callable[[], float] = time.monotonic,
    sleeper: Callable[[float], None] = time.sleep,
    rng: Optional[random.Random] = None,
) -> Iterator[RepoDescriptor]:
    """Yield up to max_repos descriptors; the cursor (mutated in place) marks
    page boundaries so discovery can resume after interruption."""
    cursor = cursor if cursor is not None else Cursor()
    if isinstance(source, SeedFile):
        yield from _discover_seed(source, limits, cursor)
        return

    if transport is None:
        if not source.token and not os.environ.get("BINFORGE_API_TOKEN"):
            raise AuthError(f"api_query against {source.endpoint} requires a token")
        transport = HttpTransport(source.token or os.environ.get("BINFORGE_API_TOKEN"))
    limiter = RateLimiter(limits.rate_per_minute, clock=clock, sleeper=sleeper, rng=rng)
    client = HostingApiClient(source, transport, limiter)

    yielded = 0
    while yielded < limits.max_repos:
        items = client.search_page(cursor.page)
        if not items:
            return
        for item in items[cursor.index :]:
            if yielded >= limits.max_repos:
                return
            yield client.describe(item)
            yielded += 1
            cursor.index += 1
        cursor.page += 1
        cursor.index = 0
        cursor.checkpoints += 1


def _discover_seed(
    source: SeedFile, limits: DiscoveryLimits, cursor: Cursor
) -> Iterator[RepoDescriptor]:
    try:
        lines = Path(source.path).read_text().splitlines()
    except OSError as exc:
        raise MalformedSeedError(f"unreadable seed file {source.path}: {exc}") from exc
    entries = []
    for line in lines:
        parsed = parse_seed_line(line)
        if parsed:
            entries.append(parsed)
    yielded = 0
    for position, (url, commit) in enumerate(entries):
        if position < cursor.index:
            continue
        if yielded >= limits.max_repos:
            return
        local = _seed_local_path(url)
        if local is not None:
            yield _describe_local(local, url, commit)
        else:
            yield RepoDescriptor(
                url=url, commit=commit, file_count=0, size_kb=0, readme_text="", paths=[]
            )
        yielded += 1
        cursor.index = position + 1
        cursor.checkpoints += 1


def _seed_local_path(url: str) -> Optional[Path]:
    candidate = url[7:] if url.startswith("file://") else url
    path = Path(candidate)
    return path if path.is_dir() else None


# -- filtering ----------------------------------------------------------------------


def filter_repo(descriptor: RepoDescriptor, profile: FilterProfile) -> FilterDecision:
    """Pure filter: same descriptor and profile always give the same decision."""
    if profile.platform is Platform.WINDOWS:
        if descriptor.file_count < profile.min_file_count:
            return FilterDecision(False, "file_count")
        if descriptor.size_kb < profile.min_size_kb:
            return FilterDecision(False, "size")
        if not any(marker in descriptor.readme_text for marker in profile.readme_markers):
            return FilterDecision(False, "readme_marker")
        if not any(p.lower().endswith(".sln") for p in descriptor.paths):
            return FilterDecision(False, "solution_file")
        build_system = BuildSystem.MSBUILD_SOLUTION
    elif profile.platform is Platform.LINUX:
        def depth(p: str) -> int:
            return p.count("/")

        has_makefile = any(
            Path(p).name in ("Makefile", "makefile", "GNUmakefile")
            and depth(p) <= profile.makefile_search_depth
            for p in descriptor.paths
        )
        if not has_makefile:
            return FilterDecision(False, "no_makefile")
        build_system = BuildSystem.MAKEFILE
    else:
        return FilterDecision(False, "unsupported_profile")

    record = RepoRecord(
        url=descriptor.url,
        commit=descriptor.commit,
        platform_hint=profile.platform,
        build_system=build_system,
        file_count=descriptor.file_count,
        size_kb=descriptor.size_kb,
        readme_markers=frozenset(
            m for m in profile.readme_markers if m in descriptor.readme_text
        ),
        license_id=normalize_spdx(descriptor.api_license),
        crawled_at=utc_now(),
    )
    return FilterDecision(True, None, record)


# -- license detection ------------------------------------------------------------------

_SPDX_ALIASES = {
    "mit": "MIT",
    "isc": "ISC",
    "apache-2.0": "Apache-2.0",
    "bsd-2-clause": "BSD-2-Clause",
    "bsd-3-clause": "BSD-3-Clause",
    "gpl-2.0": "GPL-2.0-only",
    "gpl-3.0": "GPL-3.0-only",
    "lgpl-2.1": "LGPL-2.1-only",
    "mpl-2.0": "MPL-2.0",
    "unlicense": "Unlicense",
}

_LICENSE_FILES = ("LICENSE", "LICENSE.txt", "LICENSE.md", "COPYING", "COPYING.txt")


def normalize_spdx(value: Optional[str]) -> Optional[str]:
    if not value:
        return None
    if value.upper() == "NOASSERTION":
        return None
    return _SPDX_ALIASES.get(value.lower(), value)


def _normalize_license_text(text: str) -> str:
    """Whitespace-collapse and drop copyright notice lines, which embed
    year/holder placeholders the templates cannot anticipate."""
    kept = [
        line
        for line in text.splitlines()
        if not line.strip().lower().startswith("copyright")
    ]
    return " ".join(" ".join(kept).lower().split())


def _bundled_templates() -> dict[str, str]:
    templates = {}
    for entry in resources.files("binforge.licenses").iterdir():
        if entry.name.endswith(".txt"):
            templates[entry.name[:-4]] = _normalize_license_text(entry.read_text())
    return templates


def detect_license(
    repo_path: Union[str, Path], api_license_field: Optional[str] = None
) -> Optional[str]:
    """API-reported SPDX id when present; else exact template match of the
    LICENSE/COPYING file after whitespace normalization; else None."""
    api_id = normalize_spdx(api_license_field)
    if api_id:
        return api_id
    repo_path = Path(repo_path)
    templates = _bundled_templates()
    for name in _LICENSE_FILES:
        path = repo_path / name
        if not path.is_file():
            continue
        normalized = _normalize_license_text(path.read_text(errors="replace"))
        for spdx_id, template in templates.items():
            if normalized == template:
                return spdx_id
    return None


# -- cloning ------------------------------------------------------------------------


def _run_git(args: Sequence[str], cwd: Optional[Path] = None) -> subprocess.CompletedProcess:
    return subprocess.run(
        ["git", *args], cwd=cwd, capture_output=True, text=True, timeout=300
    )


def clone_at(record: RepoRecord, workdir: Union[str, Path]) -> Path:
    """Shallow clone pinned to record.commit; the tree is marked read-only.

    The mutator re-permits the specific build files it rewrites; everything
    else stays protected against accidental modification.
    """
    if not record.commit:
        raise CloneError(f"{record.url}: no pinned commit to clone")
    workdir = Path(workdir)
    checkout = workdir / "checkout"
    checkout.mkdir(parents=True, exist_ok=True)
    origin = record.url[7:] if record.url.startswith("file://") else record.url

    for step in (["init", "-q"], ["remote", "add", "origin", origin]):
        result = _run_git(step, cwd=checkout)
        if result.returncode != 0:
            raise CloneError(f"git {step[0]} failed: {result.stderr.strip()}")
    fetch = _run_git(["fetch", "-q", "--depth", "1", "origin", record.commit], cwd=checkout)
    if fetch.returncode != 0:
        # fall back to a full fetch for hosts that refuse sha-addressed shallow fetches
        fetch = _run_git(["fetch", "-q", "origin"], cwd=checkout)
        if fetch.returncode != 0:
            raise CloneError(f"git fetch failed for {record.url}: {fetch.stderr.strip()}")
        probe = _run_git(["cat-file", "-e", f"{record.commit}^{{commit}}"], cwd=checkout)
        if probe.returncode != 0:
            raise CommitNotFoundError(f"{record.url}: commit {record.commit} not found upstream")
    checkout_result = _run_git(["checkout", "-q", record.commit], cwd=checkout)
    if checkout_result.returncode != 0:
        checkout_result = _run_git(["checkout", "-q", "FETCH_HEAD"], cwd=checkout)
        if checkout_result.returncode != 0:
            raise CommitNotFoundError(
                f"{record.url}: cannot check out {record.commit}: {checkout_result.stderr.strip()}"
            )
    _mark_read_only(checkout)
    return checkout


def _mark_read_only(root: Path) -> None:
    for path in root.rglob("*"):
        if path.is_file() and ".git" not in path.parts:
            mode = path.stat().st_mode
            path.chmod(mode & ~(stat.S_IWUSR | stat.S_IWGRP | stat.S_IWOTH))


def tree_digest(root: Path) -> str:
    """Content hash of a checkout (excluding .git), for pinning tests."""
    import hashlib

    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file() and ".git" not in path.parts:
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(b"\x00")
            digest.update(path.read_bytes())
    return digest.hexdigest()
