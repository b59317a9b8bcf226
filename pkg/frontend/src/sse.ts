/** Incremental Server-Sent-Events parser.
 *
 * Feed arbitrary text chunks; complete `data:` events come out. Comment
 * lines (heartbeats) are dropped. Only the `data` field is used by the
 * agent API, so multi-field events are not needed.
 */
export class SseParser {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const events: string[] = [];
    let index: number;
    while ((index = this.buffer.indexOf("\n\n")) !== -1) {
      const block = this.buffer.slice(0, index);
      this.buffer = this.buffer.slice(index + 2);
      const datas = block
        .split("\n")
        .filter((line) => line.startsWith("data:"))
        .map((line) => line.slice(5).trimStart());
      if (datas.length > 0) {
        events.push(datas.join("\n"));
      }
    }
    return events;
  }
}
