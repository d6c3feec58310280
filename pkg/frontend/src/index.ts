// Node bindings for the lgse tokenizer toolkit.
//
// Nothing is re-implemented here: each operation spawns the lgse CLI and
// relays its output, so binding results are the core's results by
// construction. A handle carries validated paths plus the interpreter to
// spawn; since every call runs in its own process, a handle may be shared
// freely across concurrent callers for read operations.

import { spawn } from "node:child_process";
import { constants } from "node:fs";
import { access } from "node:fs/promises";

/** Mirrors the core package version; load() verifies the match. */
export const VERSION = "0.1.0";

/** One encoded line: token ids plus [start, end) word alignment spans. */
export interface TokenSequence {
  ids: number[];
  wordSpans: Array<[number, number]>;
}

/** How a new token's vector was produced, plus the vector itself. */
export interface InitResult {
  token: string;
  method: "morph_average" | "char_ngram" | "gaussian";
  ngramsHit: number;
  ngramsMissed: number;
  vector: number[];
}

export interface FertilityReport {
  totalWords: number;
  totalTokens: number;
  tf: number;
  unkRate: number;
  /** word length -> counts, keys as decimal strings (mirrors the core JSON) */
  hist: Record<string, { words: number; tokens: number }>;
}

export interface LoadOptions {
  /** Interpreter to spawn. Default: $LGSE_PYTHON, else "python3". */
  python?: string;
  /** Character n-gram vector table; required for initToken. */
  vectorsPath?: string;
  /** Pretrained embedding matrix; required for initToken. */
  pretrainedPath?: string;
}

/** Raised when the core process exits nonzero. */
export class CoreExitError extends Error {
  constructor(
    readonly exitCode: number,
    readonly stderr: string,
    command: string,
  ) {
    super(`lgse ${command} exited with code ${exitCode}: ${stderr.trim()}`);
    this.name = "CoreExitError";
  }
}

interface RawSequence {
  ids: number[];
  word_spans: Array<[number, number]>;
}

interface RawInit {
  token: string;
  method: InitResult["method"];
  ngrams_hit: number;
  ngrams_missed: number;
  vector: number[];
}

interface RawFertility {
  total_words: number;
  total_tokens: number;
  tf: number;
  unk_rate: number;
  hist: Record<string, { words: number; tokens: number }>;
}

function runCore(
  python: string,
  args: string[],
  stdin?: string,
): Promise<string> {
  return new Promise((resolve, reject) => {
    const child = spawn(python, ["-m", "lgse", ...args], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    const out: Buffer[] = [];
    const err: Buffer[] = [];
    child.stdout.on("data", (chunk: Buffer) => out.push(chunk));
    child.stderr.on("data", (chunk: Buffer) => err.push(chunk));
    // a child that dies early may close stdin mid-write; the exit code is
    // the error we actually want to report
    child.stdin.on("error", () => {});
    child.on("error", reject);
    child.on("close", (code) => {
      if (code !== 0) {
        const stderr = Buffer.concat(err).toString("utf8");
        reject(new CoreExitError(code ?? -1, stderr, args[0] ?? ""));
      } else {
        resolve(Buffer.concat(out).toString("utf8"));
      }
    });
    child.stdin.end(stdin ?? "");
  });
}

function rejectNewlines(text: string, what: string): void {
  if (text.includes("\n") || text.includes("\r")) {
    throw new Error(`${what} must be a single line (embedded newline)`);
  }
}

function splitLines(payload: string): string[] {
  return payload.length === 0 ? [] : payload.replace(/\n$/, "").split("\n");
}

/**
 * A loaded (vocabulary, lexicon) pair. Construct through load().
 */
export class BoundTokenizer {
  #closed = false;

  /** @internal */
  constructor(
    private readonly python: string,
    private readonly vocabPath: string,
    private readonly lexiconPath: string | undefined,
    private readonly options: LoadOptions,
    private readonly coreVersion: string,
  ) {}

  /** Version string reported by the spawned core. */
  get version(): string {
    return this.coreVersion;
  }

  /**
   * Releases the handle. Idempotent: closing twice is a no-op. Later
   * calls on the handle are rejected.
   */
  close(): void {
    this.#closed = true;
  }

  get closed(): boolean {
    return this.#closed;
  }

  /**
   * Encodes one line of text.
   *
   * @returns token ids plus the word alignment spans decode() needs
   */
  async encode(text: string): Promise<TokenSequence> {
    const [seq] = await this.encodeLines([text]);
    return seq!;
  }

  /** Encodes many lines in a single core invocation. */
  async encodeLines(lines: string[]): Promise<TokenSequence[]> {
    this.assertOpen();
    if (lines.length === 0) return [];
    for (const line of lines) rejectNewlines(line, "text");
    const stdout = await this.run(
      ["tokenize", "--vocab", this.vocabPath, ...this.lexiconArgs(), "--format", "json"],
      lines.join("\n") + "\n",
    );
    const rows = splitLines(stdout);
    if (rows.length !== lines.length) {
      throw new Error(`core returned ${rows.length} sequences for ${lines.length} lines`);
    }
    return rows.map((row) => {
      const raw = JSON.parse(row) as RawSequence;
      return { ids: raw.ids, wordSpans: raw.word_spans };
    });
  }

  /** Reconstructs text from an encoded sequence. */
  async decode(seq: TokenSequence): Promise<string> {
    const [line] = await this.decodeLines([seq]);
    return line!;
  }

  /** Decodes many sequences in a single core invocation. */
  async decodeLines(seqs: TokenSequence[]): Promise<string[]> {
    this.assertOpen();
    if (seqs.length === 0) return [];
    const payload = seqs
      .map((s) => JSON.stringify({ ids: s.ids, word_spans: s.wordSpans }))
      .join("\n") + "\n";
    const stdout = await this.run(
      ["tokenize", "--vocab", this.vocabPath, "--decode"],
      payload,
    );
    const lines = splitLines(stdout);
    if (lines.length !== seqs.length) {
      throw new Error(`core returned ${lines.length} lines for ${seqs.length} sequences`);
    }
    return lines;
  }

  /**
   * Initializes an embedding vector for one token. Needs the handle to
   * have been loaded with a lexicon plus vectorsPath and pretrainedPath.
   *
   * @param seed seed for the Gaussian fallback tier (default 0)
   */
  async initToken(token: string, seed = 0): Promise<InitResult> {
    const [result] = await this.initTokens([token], seed);
    return result!;
  }

  /** Initializes many tokens in a single core invocation. */
  async initTokens(tokens: string[], seed = 0): Promise<InitResult[]> {
    this.assertOpen();
    if (tokens.length === 0) return [];
    for (const token of tokens) {
      if (token.length === 0) throw new Error("token must be a non-empty string");
      rejectNewlines(token, "token");
    }
    const { vectorsPath, pretrainedPath } = this.options;
    if (!vectorsPath || !pretrainedPath) {
      throw new Error("initToken needs vectorsPath and pretrainedPath passed to load()");
    }
    if (!this.lexiconPath) {
      throw new Error("initToken needs a lexicon passed to load()");
    }
    const args = [
      "init",
      "--vocab", this.vocabPath,
      "--lexicon", this.lexiconPath,
      "--vectors", vectorsPath,
      "--pretrained", pretrainedPath,
      "--seed", String(seed),
      "--quiet",
    ];
    for (const token of tokens) args.push("--token", token);
    const stdout = await this.run(args);
    return splitLines(stdout).map((row) => {
      const raw = JSON.parse(row) as RawInit;
      return {
        token: raw.token,
        method: raw.method,
        ngramsHit: raw.ngrams_hit,
        ngramsMissed: raw.ngrams_missed,
        vector: raw.vector,
      };
    });
  }

  /** Token fertility statistics over a corpus file. */
  async fertility(corpusPath: string): Promise<FertilityReport> {
    this.assertOpen();
    await access(corpusPath, constants.R_OK);
    const stdout = await this.run([
      "stats", "fertility",
      "--vocab", this.vocabPath,
      ...this.lexiconArgs(),
      "--corpus", corpusPath,
      "--json", "-",
      "--quiet",
    ]);
    const raw = JSON.parse(stdout) as RawFertility;
    return {
      totalWords: raw.total_words,
      totalTokens: raw.total_tokens,
      tf: raw.tf,
      unkRate: raw.unk_rate,
      hist: raw.hist,
    };
  }

  private lexiconArgs(): string[] {
    return this.lexiconPath ? ["--lexicon", this.lexiconPath] : [];
  }

  private run(args: string[], stdin?: string): Promise<string> {
    return runCore(this.python, args, stdin);
  }

  private assertOpen(): void {
    if (this.#closed) throw new Error("tokenizer handle is closed");
  }
}

/**
 * Loads a vocabulary (and optionally a lexicon) into a handle.
 *
 * Paths are checked up front so a typo fails here rather than on the
 * first encode. The core is spawned once to read its version; a mismatch
 * with this package's VERSION is an install error and rejects.
 */
export async function load(
  vocabPath: string,
  lexiconPath?: string,
  options: LoadOptions = {},
): Promise<BoundTokenizer> {
  const python = options.python ?? process.env["LGSE_PYTHON"] ?? "python3";
  await access(vocabPath, constants.R_OK);
  if (lexiconPath) await access(lexiconPath, constants.R_OK);
  if (options.vectorsPath) await access(options.vectorsPath, constants.R_OK);
  if (options.pretrainedPath) await access(options.pretrainedPath, constants.R_OK);
  const stdout = await runCore(python, ["--version"]);
  const coreVersion = stdout.trim().split(/\s+/).pop() ?? "";
  if (coreVersion !== VERSION) {
    throw new Error(
      `core reports version ${coreVersion} but these bindings are ${VERSION}`,
    );
  }
  return new BoundTokenizer(python, vocabPath, lexiconPath, options, coreVersion);
}
