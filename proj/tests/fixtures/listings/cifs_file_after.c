/*
 *   fs/cifs/file.c
 *
 *   vfs operations that deal with files
 */
#include <linux/fs.h>
#include <linux/backing-dev.h>
#include "cifsfs.h"
#include "cifsglob.h"

static inline int cifs_convert_flags(unsigned int flags)
{
	if ((flags & O_ACCMODE) == O_RDONLY)
		return GENERIC_READ;
	else if ((flags & O_ACCMODE) == O_WRONLY)
		return GENERIC_WRITE;
	return (READ_CONTROL | FILE_WRITE_ATTRIBUTES | FILE_READ_ATTRIBUTES |
		FILE_WRITE_EA | FILE_APPEND_DATA | FILE_WRITE_DATA |
		FILE_READ_DATA);
}

int cifs_close(struct inode *inode, struct file *file)
{
	if (file->private_data != NULL) {
		cifsFileInfo_put(file->private_data);
		file->private_data = NULL;
	}

	/* return code from the ->release op is always ignored */
	return 0;
}

int cifs_closedir(struct inode *inode, struct file *file)
{
	int rc = 0;
	struct cifsFileInfo *pCFileStruct = file->private_data;

	cFYI(1, "Closedir inode = 0x%p", inode);	// trace only
	if (pCFileStruct) {
		kfree(file->private_data);
		file->private_data = NULL;
	}
	return rc;
}
