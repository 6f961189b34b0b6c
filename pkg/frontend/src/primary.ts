/**
 * Process bridge to the backend `gtc` command-line tools.
 *
 * All numerical work (graph construction, losses, gradients, decoding,
 * oracle error rates) happens in the backend; this module only shuttles
 * matrices and graphs across the text formats. Calls are synchronous,
 * one process per call, so training code can treat them like kernels.
 */

import { spawnSync } from 'node:child_process';
import { createHash } from 'node:crypto';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import {
    NBest,
    formatAlphabet,
    formatMatrix,
    formatNbest,
    formatRefs,
    parseMatrix,
    parseNbest,
    parseNum,
} from './formats.js';

export interface LossItem {
    graphText: string;
    /** logit rows actually sent; trim padding before calling */
    logits: number[][];
}

export interface LossResult {
    loss: number;
    /** same shape as the item's logits; all zeros when the loss is infinite */
    grad: number[][];
}

export interface BuildGraphOptions {
    mu: number;
    eta: number;
    unitWeights?: boolean;
}

export interface BuiltGraph {
    graphText: string;
    /** non-blank nodes per 1-best token, as reported by the builder */
    density: number;
}

const INSTALL_HINT =
    'backend command not found; install the primary package ' +
    '(pip install -e <repo root>) or point GTC_BIN at the gtc executable';

export class PrimaryClient {
    readonly bin: string;
    readonly workDir: string;
    private readonly graphPaths = new Map<string, string>();
    private calls = 0;

    constructor(opts: { bin?: string; workDir?: string } = {}) {
        this.bin = opts.bin ?? process.env.GTC_BIN ?? 'gtc';
        this.workDir =
            opts.workDir ?? fs.mkdtempSync(path.join(os.tmpdir(), 'gtc-bridge-'));
        fs.mkdirSync(path.join(this.workDir, 'graphs'), { recursive: true });
    }

    dispose(): void {
        fs.rmSync(this.workDir, { recursive: true, force: true });
    }

    run(args: string[], allowExit: number[] = [0]): {
        status: number;
        stdout: string;
        stderr: string;
    } {
        const proc = spawnSync(this.bin, args, {
            encoding: 'utf8',
            maxBuffer: 1 << 28,
        });
        const err = proc.error as NodeJS.ErrnoException | undefined;
        if (err && err.code === 'ENOENT') {
            throw new Error(`${JSON.stringify(this.bin)}: ${INSTALL_HINT}`);
        }
        if (err) throw err;
        const status = proc.status ?? -1;
        if (!allowExit.includes(status)) {
            throw new Error(
                `${this.bin} ${args[0]} exited ${status}: ${proc.stderr.trim()}`);
        }
        return { status, stdout: proc.stdout, stderr: proc.stderr };
    }

    /** Content-addressed graph file; repeated texts are written once. */
    graphFile(graphText: string): string {
        const key = createHash('sha1').update(graphText).digest('hex');
        let p = this.graphPaths.get(key);
        if (!p) {
            p = path.join(this.workDir, 'graphs', `${key}.gtc`);
            fs.writeFileSync(p, graphText);
            this.graphPaths.set(key, p);
        }
        return p;
    }

    private callDir(): string {
        const dir = path.join(this.workDir, `call${this.calls++}`);
        fs.mkdirSync(dir, { recursive: true });
        return dir;
    }

    /**
     * Batched loss and gradient with respect to the given logits.
     * Infeasible items come back as {loss: Infinity, grad: zeros}; any
     * other per-item failure throws, naming the item index.
     */
    lossBatch(items: LossItem[], symbols: string[]): LossResult[] {
        if (!items.length) return [];
        const dir = this.callDir();
        try {
            const manifest: string[] = [];
            for (let i = 0; i < items.length; i++) {
                const mPath = path.join(dir, `m${i}.tsv`);
                fs.writeFileSync(mPath, formatMatrix(items[i].logits, symbols));
                manifest.push([
                    String(i),
                    this.graphFile(items[i].graphText),
                    mPath,
                    path.join(dir, `g${i}.tsv`),
                ].join('\t'));
            }
            const mfPath = path.join(dir, 'batch.tsv');
            fs.writeFileSync(mfPath, manifest.join('\n') + '\n');
            const { stdout } = this.run(['loss', '--batch', mfPath, '--logits']);

            const losses = new Map<number, number>();
            for (const line of stdout.split('\n')) {
                if (!line.trim()) continue;
                const fields = line.split('\t');
                if (fields[1] === 'error') {
                    throw new Error(`loss item ${fields[0]}: ${fields.slice(2).join('\t')}`);
                }
                losses.set(Number(fields[0]), parseNum(fields[1], 'loss', 0));
            }
            return items.map((item, i) => {
                const loss = losses.get(i);
                if (loss === undefined) throw new Error(`loss item ${i}: no result line`);
                const grad = parseMatrix(
                    fs.readFileSync(path.join(dir, `g${i}.tsv`), 'utf8'), `g${i}.tsv`);
                return { loss, grad: grad.values };
            });
        } finally {
            fs.rmSync(dir, { recursive: true, force: true });
        }
    }

    /** Confusion-network supervision graphs for each N-best list. */
    buildGraphs(nbests: NBest[], tokens: string[],
                opts: BuildGraphOptions): Map<string, BuiltGraph> {
        const dir = this.callDir();
        try {
            const nbPath = path.join(dir, 'hyps.nbest');
            fs.writeFileSync(nbPath, formatNbest(nbests));
            const abPath = path.join(dir, 'alphabet.txt');
            fs.writeFileSync(abPath, formatAlphabet(tokens));
            const outDir = path.join(dir, 'graphs');
            const args = ['build-graph', '--nbest', nbPath, '--alphabet', abPath,
                          '--mu', String(opts.mu), '--eta', String(opts.eta),
                          '--out', outDir];
            if (opts.unitWeights) args.push('--unit-weights');
            const { stdout } = this.run(args);

            const out = new Map<string, BuiltGraph>();
            for (const line of stdout.split('\n')) {
                if (!line.trim()) continue;
                const [uttId, density] = line.split('\t');
                out.set(uttId, {
                    graphText: fs.readFileSync(
                        path.join(outDir, `${uttId}.gtc`), 'utf8'),
                    density: parseNum(density, 'build-graph', 0),
                });
            }
            return out;
        } finally {
            fs.rmSync(dir, { recursive: true, force: true });
        }
    }

    /** N-best decoding of logit matrices through the backend beam search. */
    decode(items: { uttId: string; logits: number[][] }[], symbols: string[],
           n: number, beam: number): NBest[] {
        const dir = this.callDir();
        try {
            const manifest: string[] = [];
            for (let i = 0; i < items.length; i++) {
                const mPath = path.join(dir, `m${i}.tsv`);
                fs.writeFileSync(mPath, formatMatrix(items[i].logits, symbols));
                manifest.push(`${items[i].uttId}\t${mPath}`);
            }
            const mfPath = path.join(dir, 'decode.tsv');
            fs.writeFileSync(mfPath, manifest.join('\n') + '\n');
            const outPath = path.join(dir, 'decoded.nbest');
            this.run(['decode', '--manifest', mfPath, '--logits',
                      '--n', String(n), '--beam', String(beam), '--out', outPath]);
            return parseNbest(fs.readFileSync(outPath, 'utf8'), outPath);
        } finally {
            fs.rmSync(dir, { recursive: true, force: true });
        }
    }

    /** Corpus oracle rate of N-best lists, weighted by reference length. */
    oracleLerNbest(nbests: NBest[], refs: [string, string[]][]): number {
        const dir = this.callDir();
        try {
            const nbPath = path.join(dir, 'hyps.nbest');
            fs.writeFileSync(nbPath, formatNbest(nbests));
            const refPath = path.join(dir, 'refs.tsv');
            fs.writeFileSync(refPath, formatRefs(refs));
            const { stdout } = this.run(
                ['oracle-ler', '--nbest', nbPath, '--ref', refPath]);
            return parseNum(stdout, 'oracle-ler', 0);
        } finally {
            fs.rmSync(dir, { recursive: true, force: true });
        }
    }

    /** Corpus oracle rate of supervision graphs, one graph per reference. */
    oracleLerGraphs(graphs: Map<string, string>, refs: [string, string[]][]): number {
        const dir = this.callDir();
        try {
            const gDir = path.join(dir, 'graphs');
            fs.mkdirSync(gDir);
            for (const [uttId, text] of graphs) {
                fs.writeFileSync(path.join(gDir, `${uttId}.gtc`), text);
            }
            const refPath = path.join(dir, 'refs.tsv');
            fs.writeFileSync(refPath, formatRefs(refs));
            const { stdout } = this.run(
                ['oracle-ler', '--graph-dir', gDir, '--ref', refPath]);
            return parseNum(stdout, 'oracle-ler', 0);
        } finally {
            fs.rmSync(dir, { recursive: true, force: true });
        }
    }
}
