/**
 * Structural metrics over a Python parse tree.
 *
 * The tree comes from @lezer/python, an error-tolerant parser: any input
 * yields a tree, and syntax problems appear as error nodes. parseOk is true
 * only when the tree is error-free; in that case the record carries
 * functionCount (every `def`/`async def`, nested included, lambdas
 * excluded), hasHelper (two or more definitions, or any nested one), and
 * maxDepth (nodes on the longest root-to-leaf path, root = 1; this counting
 * is frozen here and pinned by goldens.json, so probe versions stay
 * comparable).
 */
import { parser } from "@lezer/python";

export const PROTOCOL_VERSION = 1;

export interface ProbeRecord {
  protocol_version: number;
  parse_ok: boolean;
  function_count?: number;
  has_helper?: boolean;
  max_depth?: number;
}

const FUNCTION_NODE = "FunctionDefinition";

export function computeMetrics(source: string): ProbeRecord {
  const tree = parser.parse(source);
  const cursor = tree.cursor();

  let maxDepth = 1;
  let functionCount = 0;
  let sawNested = false;
  let sawError = false;
  let enclosingFunctions = 0;

  const walk = (depth: number): void => {
    if (depth > maxDepth) maxDepth = depth;
    if (cursor.type.isError) sawError = true;
    const isFunction = cursor.name === FUNCTION_NODE;
    if (isFunction) {
      functionCount += 1;
      if (enclosingFunctions > 0) sawNested = true;
      enclosingFunctions += 1;
    }
    if (cursor.firstChild()) {
      do {
        walk(depth + 1);
      } while (cursor.nextSibling());
      cursor.parent();
    }
    if (isFunction) enclosingFunctions -= 1;
  };
  walk(1);

  if (sawError) {
    return { protocol_version: PROTOCOL_VERSION, parse_ok: false };
  }
  return {
    protocol_version: PROTOCOL_VERSION,
    parse_ok: true,
    function_count: functionCount,
    has_helper: functionCount >= 2 || sawNested,
    max_depth: maxDepth,
  };
}

/** One-line wire form; key order is fixed for bytewise determinism. */
export function serializeRecord(record: ProbeRecord): string {
  if (!record.parse_ok) {
    return JSON.stringify({
      protocol_version: record.protocol_version,
      parse_ok: false,
    });
  }
  return JSON.stringify({
    protocol_version: record.protocol_version,
    parse_ok: true,
    function_count: record.function_count,
    has_helper: record.has_helper,
    max_depth: record.max_depth,
  });
}
