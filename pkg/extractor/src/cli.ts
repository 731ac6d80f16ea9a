import { DEFAULT_MODEL, extract, ExtractJob } from './extract';
import { FormatError } from './formats';
import { ModelError } from './model';

const USAGE = `usage: extract --image X.ppm --plan plan.txt --out DIR [--model ID] [--device cpu]

Runs the class-activation network over every slice of the plan and writes
slice_<i>.fmap response maps plus manifest.txt into DIR.`;

export class UsageError extends Error {}

export function parseArgs(argv: string[]): ExtractJob {
  if (argv[0] !== 'extract') {
    throw new UsageError(`unknown command '${argv[0] ?? ''}'`);
  }
  const flags: Record<string, string> = {};
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new UsageError(`flag '${key}' needs a value`);
    }
    flags[key.slice(2)] = argv[i + 1];
  }
  for (const key of Object.keys(flags)) {
    if (!['image', 'plan', 'out', 'model', 'device'].includes(key)) {
      throw new UsageError(`unknown flag '--${key}'`);
    }
  }
  for (const key of ['image', 'plan', 'out']) {
    if (!flags[key]) throw new UsageError(`missing required flag '--${key}'`);
  }
  return {
    image: flags.image,
    plan: flags.plan,
    outDir: flags.out,
    model: flags.model ?? DEFAULT_MODEL,
    device: flags.device ?? 'cpu',
  };
}

async function main(argv: string[]): Promise<number> {
  let job: ExtractJob;
  try {
    job = parseArgs(argv);
  } catch (e) {
    if (e instanceof UsageError) {
      console.error(e.message);
      console.error(USAGE);
      return 2;
    }
    throw e;
  }
  try {
    const written = await extract(job);
    console.log(`wrote ${written.length} files to ${job.outDir}`);
    return 0;
  } catch (e) {
    if (e instanceof FormatError || e instanceof ModelError || (e as NodeJS.ErrnoException).code) {
      console.error(`error: ${(e as Error).message}`);
      return 1;
    }
    throw e;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then(code => {
    process.exitCode = code;
  });
}
