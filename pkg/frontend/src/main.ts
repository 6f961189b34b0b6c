/**
 * Demo entry point.
 *
 * Usage: node dist/main.js --config demo.cfg --out OUT_DIR
 *                          [--seed N] [--alphabet FILE] [--gtc-bin PATH]
 *
 * Writes report.tsv and summary.txt under OUT_DIR and prints the summary.
 * Exit codes: 0 success, 1 usage, 2 I/O or validation failure.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import {
    DemoConfig,
    configFromMapping,
    reportSummary,
    reportToTsv,
    selfTrainExperiment,
} from './demo.js';
import { taskTokens } from './data.js';
import { ParseError, parseAlphabet, parseConfig } from './formats.js';
import { PrimaryClient } from './primary.js';

interface Args {
    config: string;
    out: string;
    seed?: number;
    alphabet?: string;
    gtcBin?: string;
}

function parseArgs(argv: string[]): Args {
    const out: Partial<Args> = {};
    for (let i = 0; i < argv.length; i += 2) {
        const flag = argv[i];
        const value = argv[i + 1];
        if (value === undefined) throw new UsageError(`missing value for ${flag}`);
        switch (flag) {
            case '--config': out.config = value; break;
            case '--out': out.out = value; break;
            case '--seed': {
                const n = Number(value);
                if (!Number.isInteger(n)) throw new UsageError(`bad seed ${value}`);
                out.seed = n;
                break;
            }
            case '--alphabet': out.alphabet = value; break;
            case '--gtc-bin': out.gtcBin = value; break;
            default: throw new UsageError(`unknown flag ${flag}`);
        }
    }
    if (!out.config || !out.out) {
        throw new UsageError('--config and --out are required');
    }
    return out as Args;
}

class UsageError extends Error {}

export function runDemo(args: Args): void {
    let text: string;
    try {
        text = fs.readFileSync(args.config, 'utf8');
    } catch (e) {
        throw new ParseError(args.config, 0, (e as Error).message);
    }
    let config: DemoConfig = configFromMapping(parseConfig(text, args.config));
    if (args.seed !== undefined) config = { ...config, seed: args.seed };
    if (args.alphabet) {
        const fileTokens = parseAlphabet(fs.readFileSync(args.alphabet, 'utf8'));
        const configTokens = taskTokens(config.task);
        if (fileTokens.join(' ') !== configTokens.join(' ')) {
            throw new Error(
                `alphabet mismatch: config derives [${configTokens.join(' ')}] ` +
                `but ${args.alphabet} lists [${fileTokens.join(' ')}]`);
        }
    }

    const client = new PrimaryClient(args.gtcBin ? { bin: args.gtcBin } : {});
    try {
        const report = selfTrainExperiment(config, client);
        fs.mkdirSync(args.out, { recursive: true });
        fs.writeFileSync(path.join(args.out, 'report.tsv'), reportToTsv(report));
        const summary = reportSummary(report);
        fs.writeFileSync(path.join(args.out, 'summary.txt'), summary);
        process.stdout.write(summary);
    } finally {
        client.dispose();
    }
}

export function main(argv: string[]): number {
    try {
        runDemo(parseArgs(argv));
        return 0;
    } catch (e) {
        if (e instanceof UsageError) {
            process.stderr.write(`usage error: ${e.message}\n`);
            return 1;
        }
        process.stderr.write(`${(e as Error).message}\n`);
        return 2;
    }
}

const entry = process.argv[1] ? path.resolve(process.argv[1]) : '';
if (import.meta.url === `file://${entry}`) {
    process.exit(main(process.argv.slice(2)));
}
