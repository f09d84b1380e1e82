from django.db import models


# One end-to-end experiment or sweep invocation
class ExperimentRun(models.Model):
    kind_choices = [
        ('experiment', 'Experiment'),
        ('sweep', 'Sweep'),
    ]
    status_choices = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]
    run_dir = models.CharField(max_length=1024)
    kind = models.CharField(max_length=20, choices=kind_choices, default='experiment')
    status = models.CharField(max_length=20, choices=status_choices, default='running')
    stage = models.CharField(max_length=50, blank=True, null=True)  # stage that failed
    error = models.TextField(max_length=5000, blank=True, null=True)
    config = models.JSONField(default=dict)
    dataset_hash = models.CharField(max_length=64, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(blank=True, null=True)

    class Meta:
        indexes = [
            models.Index(fields=['status'], name='fairrank_run_status_idx'),
            models.Index(fields=['-created_at'], name='fairrank_run_created_idx'),
        ]

    def __str__(self):
        return f"{self.kind} run {self.id} ({self.status}) in {self.run_dir}"
