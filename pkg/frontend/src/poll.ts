// Poll a summarization job until it reaches a terminal state.

import type { JobStatus, ScmClient } from "./api.js";

export async function pollJob(
  client: ScmClient,
  jobId: string,
  onUpdate?: (job: JobStatus) => void,
  intervalMs = 500,
): Promise<JobStatus> {
  for (;;) {
    const job = await client.getJob(jobId);
    onUpdate?.(job);
    if (job.status === "done" || job.status === "failed") {
      return job;
    }
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
